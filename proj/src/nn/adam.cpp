#include "colorlab/nn/adam.hpp"

#include <cmath>

namespace colorlab::nn {

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Param<Scalar>*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (auto* p : params_) {
    m_.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
  const auto step_size = static_cast<Scalar>(options_.lr / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(options_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& g = params_[i]->grad;
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    params_[i]->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_c2 + eps);
  }
}

template <typename Scalar>
std::vector<Buffer<Scalar>> Adam<Scalar>::state() {
  std::vector<Buffer<Scalar>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i]->name + ".adam_m", &m_[i]});
    out.push_back({params_[i]->name + ".adam_v", &v_[i]});
  }
  return out;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace colorlab::nn
