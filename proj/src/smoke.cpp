#include "apn/smoke.hpp"

#include "apn/random.hpp"

namespace apn {

std::vector<Example> SmokeProblem::batch() const {
  std::vector<Example> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(Example{&inputs[i], labels[i]});
  return out;
}

SmokeProblem make_smoke_problem(std::uint64_t seed) {
  SmokeProblem p;
  const EncoderConfig enc{32, 3, {4, 4, 3}};
  p.model = ApnModel::initialize(enc, 6, derive_seed(seed, 1));
  // Nonzero biases so no unit starts exactly at a ReLU kink.
  Rng rng(derive_seed(seed, 2));
  for (Tensor& b : p.model.biases)
    for (double& v : b.data()) v = rng.uniform(0.05, 0.2);

  p.attrs.phi = Tensor(Shape{4, 6});
  for (double& v : p.attrs.phi.data()) v = rng.uniform();
  p.attrs.seen_ids = {0, 1, 3};
  p.attrs.unseen_ids = {2};
  p.attrs.groups = {{0, 1, 2}, {3, 4, 5}};

  for (std::size_t i = 0; i < 2; ++i) {
    Tensor x(Shape{3, enc.input_size, enc.input_size});
    for (double& v : x.data()) v = rng.uniform();
    p.inputs.push_back(std::move(x));
  }
  p.labels = {1, 3};
  return p;
}

}  // namespace apn
