#include "apn/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "apn/errors.hpp"

namespace apn {
namespace {

constexpr char kMagic[4] = {'A', 'P', 'N', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

std::string encode_apnt(const Tensor& t) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(kDtypeF64));
  put_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 8 * t.size());
  for (double v : t.data()) put_f64(out, v);
  return out;
}

Tensor decode_apnt(const std::string& bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not an APNT tensor (bad magic)");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kVersion) throw IoError("unsupported APNT version");
  if (static_cast<std::uint8_t>(bytes[5]) != kDtypeF64) throw IoError("unsupported APNT dtype");
  const std::uint32_t ndim = get_u32(bytes, 6);
  std::size_t pos = 10;
  if (ndim == 0 || bytes.size() < pos + 4ull * ndim) throw IoError("truncated APNT header");
  Shape shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i, pos += 4) shape[i] = get_u32(bytes, pos);
  const std::size_t n = shape_size(shape);
  if (bytes.size() != pos + 8 * n) throw IoError("APNT payload size mismatch");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i, pos += 8) data[i] = get_f64(bytes, pos);
  return Tensor(std::move(shape), std::move(data));
}

void write_apnt(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = encode_apnt(t);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_apnt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return decode_apnt(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace apn
