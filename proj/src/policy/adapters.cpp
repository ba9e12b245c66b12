#include "mtvrp/policy/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtvrp::policy {

namespace {

ad::Var base_path(ad::Var h, const LinearVars& base) { return ad::linear(h, base.w, base.bias); }

ad::Var low_rank(ad::Var h, const LoraVars& adapter) { return ad::linear(ad::linear(h, adapter.a), adapter.b); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

ad::Var lora_forward(ad::Var h, const LinearVars& base, const LoraVars& adapter, double beta) {
  return ad::add(base_path(h, base), ad::scale(low_rank(h, adapter), beta));
}

ad::Var gated_lora_forward(ad::Var h, const LinearVars& base, const LoraVars& adapter) {
  if (!adapter.gate) throw std::invalid_argument("gated_lora_forward: adapter has no gate vector");
  ad::Var g = ad::sigmoid(ad::linear(h, *adapter.gate));
  return ad::add(ad::scale_rows(base_path(h, base), g), low_rank(h, adapter));
}

ad::Var gate_coefficients(ad::Var h, ad::Var gate_w, GateActivation act, double eps) {
  ad::Var logits = ad::linear(h, gate_w);
  switch (act) {
    case GateActivation::softmax: return ad::masked_softmax(logits);
    case GateActivation::norm_softplus: return ad::row_normalize(ad::softplus(logits), eps);
    case GateActivation::sigmoid: return ad::sigmoid(logits);
  }
  throw std::invalid_argument("unknown gate activation");
}

std::array<double, kGateWidth> gate_activation(std::span<const double, kGateWidth> z, GateActivation act,
                                               double eps) {
  std::array<double, kGateWidth> out{};
  switch (act) {
    case GateActivation::softmax: {
      const double mx = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (int i = 0; i < kGateWidth; ++i) s += (out[i] = std::exp(z[i] - mx));
      for (auto& v : out) v /= s;
      break;
    }
    case GateActivation::norm_softplus: {
      double s = 0.0;
      for (int i = 0; i < kGateWidth; ++i) s += (out[i] = softplus(z[i]));
      for (auto& v : out) v /= std::max(s, eps);
      break;
    }
    case GateActivation::sigmoid:
      for (int i = 0; i < kGateWidth; ++i) out[i] = sigmoid(z[i]);
      break;
  }
  return out;
}

std::array<bool, kGateWidth> route_mask(std::span<const double, kGateWidth> alpha, Routing routing, Variant variant) {
  std::array<bool, kGateWidth> keep{};
  keep[0] = true;
  switch (routing) {
    case Routing::dense:
      keep.fill(true);
      break;
    case Routing::variant_exact:
      for (int i = 0; i < 4; ++i) keep[i + 1] = variant.has(kExpertBases[i]);
      break;
    case Routing::variant_topk: {
      std::array<int, 4> order = {1, 2, 3, 4};
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return alpha[a] > alpha[b]; });
      const int k = variant.expert_count();
      for (int i = 0; i < k; ++i) keep[order[i]] = true;
      break;
    }
  }
  return keep;
}

std::array<double, kGateWidth> route(std::span<const double, kGateWidth> alpha, Routing routing, Variant variant) {
  const auto keep = route_mask(alpha, routing, variant);
  std::array<double, kGateWidth> out{};
  for (int i = 0; i < kGateWidth; ++i) out[i] = keep[i] ? alpha[i] : 0.0;
  return out;
}

ad::Var mose_forward(ad::Var h, const MoseVars& layer, const MoseOptions& opt, Variant variant,
                     ad::Tensor* routed_alpha) {
  ad::Var alpha = gate_coefficients(h, layer.gate_w, opt.activation, opt.eps);
  if (opt.routing != Routing::dense) {
    const ad::Tensor& av = alpha.value();
    ad::Tensor keep(av.shape(), 0.0);
    for (int r = 0; r < av.rows(); ++r) {
      const auto m = route_mask(std::span<const double, kGateWidth>(av.data() + r * kGateWidth, kGateWidth),
                                opt.routing, variant);
      for (int i = 0; i < kGateWidth; ++i) keep.at(r, i) = m[i] ? 1.0 : 0.0;
    }
    alpha = ad::mul_const(alpha, keep);
  }
  if (routed_alpha) *routed_alpha = alpha.value();

  ad::Var out = ad::scale_rows(base_path(h, layer.base), ad::col(alpha, 0));
  for (int i = 0; i < 4; ++i) {
    out = ad::add(out, ad::scale_rows(low_rank(h, layer.experts[i]), ad::col(alpha, i + 1)));
  }
  out = ad::add(out, low_rank(h, layer.free));
  return out;
}

}  // namespace mtvrp::policy
