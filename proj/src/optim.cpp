#include "fedrel/optim.hpp"

#include <cmath>

namespace fedrel {

void AdamState::step(Params& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    Tensor& m = m_.try_emplace(name, Tensor::zeros_like(p)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros_like(p)).first->second;
    if (!m.same_shape(p) || !v.same_shape(p)) {
      throw ShapeError("adam: moment shape drifted for '" + name + "'");
    }
    m.mat() *= cfg_.beta1;
    v.mat() *= cfg_.beta2;
    if (git != grads.end()) {
      const Tensor& g = git->second;
      if (!g.same_shape(p)) {
        throw ShapeError("adam: gradient shape " + shape_string(g.shape()) +
                         " does not match parameter '" + name + "' " +
                         shape_string(p.shape()));
      }
      m.mat() += (1.0 - cfg_.beta1) * g.mat();
      v.mat() += (1.0 - cfg_.beta2) * g.mat().cwiseProduct(g.mat());
    }
    const Matrix m_hat = m.mat() / bc1;
    const Matrix v_hat = v.mat() / bc2;
    const double eps = cfg_.eps;
    p.mat() -= cfg_.lr * m_hat.binaryExpr(v_hat, [eps](double mh, double vh) {
      return mh / (std::sqrt(vh) + eps);
    });
    p.ensure_finite("adam step");
  }
}

void adam_step(Params& params, const std::map<std::string, Tensor>& grads,
               AdamState& state) {
  state.step(params, grads);
}

}  // namespace fedrel
