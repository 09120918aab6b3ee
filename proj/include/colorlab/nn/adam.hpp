#pragma once

#include "colorlab/nn/layers.hpp"

#include <string>
#include <vector>

namespace colorlab::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param<Scalar>*> params, AdamOptions options);

  void zero_grad();
  void step();

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  const AdamOptions& options() const { return options_; }

  /// First and second moments, exposed for checkpointing ("<param>.adam_m" / ".adam_v").
  std::vector<Buffer<Scalar>> state();

 private:
  std::vector<Param<Scalar>*> params_;
  std::vector<RowMatrix<Scalar>> m_, v_;
  AdamOptions options_;
  long long t_ = 0;
};

}  // namespace colorlab::nn
