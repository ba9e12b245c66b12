#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "mtvrp/core/rng.hpp"

namespace mtvrp::testing {

namespace {

double euclid(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Rules re-read from the problem statement: a subtour is a depot-to-depot customer list.
bool subtour_admissible(const ProblemInstance& inst, const std::vector<int>& sub) {
  const double eps = 1e-9;
  int lh = 0, bh = 0;
  bool seen_backhaul = false;
  for (int c : sub) {
    if (inst.backhaul[c] != 0) {
      seen_backhaul = true;
      bh -= inst.backhaul[c];
    } else {
      if (seen_backhaul) return false;
      lh += inst.linehaul[c];
    }
  }
  if (lh > inst.capacity || bh > inst.capacity) return false;

  const bool closed = !inst.variant.open;
  const int last = sub.back();
  double length = 0.0;
  Point at = inst.coords[0];
  for (int c : sub) {
    length += euclid(at, inst.coords[c]);
    at = inst.coords[c];
  }
  if (inst.variant.duration_limit) {
    if (length > inst.dur_limit + eps) return false;
    if (closed && length + euclid(inst.coords[last], inst.coords[0]) > inst.dur_limit + eps) return false;
  }

  if (inst.variant.time_window) {
    double clock = 0.0;
    at = inst.coords[0];
    for (int c : sub) {
      const double arrival = clock + euclid(at, inst.coords[c]);
      if (arrival > inst.tw_end[c] + eps) return false;
      clock = std::max(arrival, inst.tw_beg[c]) + inst.tw_dur[c];
      at = inst.coords[c];
    }
    if (closed && clock + euclid(inst.coords[last], inst.coords[0]) > inst.tw_end[0] + eps) return false;
  }
  return true;
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const ad::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (int r = 0; r < t.rows(); ++r) {
    for (int c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

std::vector<double> matvec(const Mat& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t k = 0; k < v.size(); ++k) out[i] += m[i][k] * v[k];
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> brute_force_mask(const ProblemInstance& inst, const std::vector<int>& prefix) {
  const int n1 = static_cast<int>(inst.coords.size());
  std::vector<bool> served(n1, false);
  std::vector<int> sub;
  for (int a : prefix) {
    if (a == 0) {
      sub.clear();
    } else {
      served[a] = true;
      sub.push_back(a);
    }
  }
  const int here = prefix.empty() ? 0 : prefix.back();
  const bool all_served = std::count(served.begin() + 1, served.end(), true) == n1 - 1;

  std::vector<std::uint8_t> mask(n1, 0);
  mask[0] = (here != 0 || all_served) ? 1 : 0;
  for (int j = 1; j < n1; ++j) {
    if (served[j]) continue;
    std::vector<int> extended = sub;
    extended.push_back(j);
    mask[j] = subtour_admissible(inst, extended) ? 1 : 0;
  }
  return mask;
}

ProblemInstance blank_instance(Variant v, const std::vector<Point>& coords, int capacity) {
  ProblemInstance inst;
  inst.variant = v;
  inst.coords = coords;
  const std::size_t n1 = coords.size();
  inst.linehaul.assign(n1, 0);
  for (std::size_t j = 1; j < n1; ++j) inst.linehaul[j] = 1;
  inst.backhaul.assign(n1, 0);
  inst.capacity = capacity;
  inst.open = v.open;
  inst.tw_beg.assign(n1, 0.0);
  inst.tw_end.assign(n1, kInf);
  inst.tw_dur.assign(n1, 0.0);
  if (v.time_window) inst.tw_end[0] = 100.0;
  if (v.duration_limit) inst.dur_limit = 100.0;
  return inst;
}

void random_walk(const ProblemInstance& inst, std::uint64_t seed,
                 const std::function<void(const EnvState&, const std::vector<int>&)>& visit) {
  Rng rng(seed);
  EnvState s = initial_state(inst);
  std::vector<int> prefix;
  while (!s.terminal(inst)) {
    visit(s, prefix);
    const auto mask = feasible_actions(s, inst);
    std::vector<int> options;
    for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
      if (mask[j]) options.push_back(j);
    }
    const int a = options[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
    s = step(s, a, inst);
    prefix.push_back(a);
  }
}

std::vector<int> random_tour(const ProblemInstance& inst, std::uint64_t seed) {
  Rng rng(seed);
  EnvState s = initial_state(inst);
  std::vector<int> nodes{0};
  while (!s.terminal(inst)) {
    const auto mask = feasible_actions(s, inst);
    std::vector<int> options;
    for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
      if (mask[j]) options.push_back(j);
    }
    const int a = options[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))];
    s = step(s, a, inst);
    nodes.push_back(a);
  }
  if (nodes.back() != 0) nodes.push_back(0);
  return nodes;
}

double finite_difference_error(const GraphFn& build, const std::vector<ad::Tensor>& inputs, double h, double floor) {
  std::vector<ad::Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    tape.backward(build(tape, leaves));
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&](const std::vector<ad::Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : xs) leaves.push_back(tape.leaf(t, false));
    return build(tape, leaves).value().item();
  };
  double worst = 0.0;
  std::vector<ad::Tensor> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double orig = xs[i][k];
      xs[i][k] = orig + h;
      const double fp = evaluate(xs);
      xs[i][k] = orig - h;
      const double fm = evaluate(xs);
      xs[i][k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

ad::Tensor random_tensor(ad::Shape shape, std::uint64_t seed, double lo, double hi) {
  ad::Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

RandomMose random_mose(ad::Tape& t, int d_in, int d_out, int r, std::uint64_t seed, bool zero_b) {
  RandomMose m;
  m.w0 = random_tensor({d_out, d_in}, seed);
  m.b0 = random_tensor({d_out}, seed + 1);
  m.gate = random_tensor({5, d_in}, seed + 2, -2, 2);
  m.vars.base = {t.constant(m.w0), t.constant(m.b0)};
  for (int i = 0; i < 4; ++i) {
    m.a[i] = random_tensor({r, d_in}, seed + 10 + i);
    m.b[i] = zero_b ? ad::Tensor({d_out, r}, 0.0) : random_tensor({d_out, r}, seed + 20 + i);
    m.vars.experts[i] = {t.constant(m.a[i]), t.constant(m.b[i]), std::nullopt};
  }
  m.fa = random_tensor({r, d_in}, seed + 30);
  m.fb = zero_b ? ad::Tensor({d_out, r}, 0.0) : random_tensor({d_out, r}, seed + 31);
  m.vars.free = {t.constant(m.fa), t.constant(m.fb), std::nullopt};
  m.vars.gate_w = t.constant(m.gate);
  return m;
}

double mose_dense_deviation(std::uint64_t seed) {
  using policy::GateActivation;
  using policy::Routing;
  double worst = 0.0;
  int trial = 0;
  for (int d : {4, 9, 16}) {
    for (int r : {1, 2, 4}) {
      if (r >= d) continue;
      for (auto act : {GateActivation::softmax, GateActivation::norm_softplus, GateActivation::sigmoid}) {
        for (auto routing : {Routing::dense, Routing::variant_topk, Routing::variant_exact}) {
          const Variant v = all_variants()[static_cast<std::size_t>(trial++ % 16)];
          ad::Tape t;
          const int d_out = d + 3;
          auto m = random_mose(t, d, d_out, r, seed + trial);
          const ad::Tensor hv = random_tensor({5, d}, seed + 7919 + trial);
          const ad::Tensor y = policy::mose_forward(t.constant(hv), m.vars, {act, routing}, v).value();
          for (int row = 0; row < 5; ++row) {
            std::vector<double> h(hv.data() + row * d, hv.data() + (row + 1) * d);
            const auto logits = matvec(to_mat(m.gate), h);
            const auto alpha =
                policy::route(policy::gate_activation(std::span<const double, 5>(logits.data(), 5), act), routing, v);
            Mat big(d_out, std::vector<double>(d, 0.0));
            auto accumulate = [&](const Mat& part, double w) {
              for (int i = 0; i < d_out; ++i) {
                for (int j = 0; j < d; ++j) big[i][j] += w * part[i][j];
              }
            };
            accumulate(to_mat(m.w0), alpha[0]);
            for (int e = 0; e < 4; ++e) accumulate(matmul(to_mat(m.b[e]), to_mat(m.a[e])), alpha[e + 1]);
            accumulate(matmul(to_mat(m.fb), to_mat(m.fa)), 1.0);
            const auto ref = matvec(big, h);
            for (int i = 0; i < d_out; ++i) {
              worst = std::max(worst, std::abs(y.at(row, i) - (ref[i] + alpha[0] * m.b0[i])));
            }
          }
        }
      }
    }
  }
  return worst;
}

}  // namespace mtvrp::testing
