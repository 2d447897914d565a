#ifndef APN_TENSOR_IO_HPP_
#define APN_TENSOR_IO_HPP_

#include <filesystem>
#include <string>

#include "apn/tensor.hpp"

namespace apn {

// APNT binary layout: "APNT", version 1, dtype 0 (f64), u32 ndim, ndim x u32
// dims, then the row-major payload. All integers and doubles little-endian.
std::string encode_apnt(const Tensor& t);
Tensor decode_apnt(const std::string& bytes);

void write_apnt(const std::filesystem::path& path, const Tensor& t);
Tensor read_apnt(const std::filesystem::path& path);

}  // namespace apn

#endif  // APN_TENSOR_IO_HPP_
