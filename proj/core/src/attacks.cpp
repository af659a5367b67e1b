#include "sidlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sidlab {

Domain domain_of(const Dataset& ds) {
  return Domain{ds.range_lo, ds.range_hi, ds.clip_domain};
}

void AttackConfig::validate() const {
  if (method.empty()) throw std::invalid_argument("AttackConfig: method unset");
  if (iters < 1) throw std::invalid_argument("AttackConfig: iters must be >= 1");
  if (eta <= 0.0 && (method == "pgd_l2" || method == "whitebox"))
    throw std::invalid_argument("AttackConfig: eta must be > 0");
  if (cw_steps < 1) throw std::invalid_argument("AttackConfig: cw_steps must be >= 1");
}

namespace {

void clip_box(Tensor& x, const Domain& dom) {
  if (!dom.clip) return;
  for (double& v : x.data()) v = std::min(dom.hi, std::max(dom.lo, v));
}

AdversarialResult finish(const IClassifier& f, const Tensor& x0,
                         Tensor x_hat, int orig_label, int iterations) {
  AdversarialResult r;
  r.perturbation = Tensor(x_hat.shape());
  for (std::int64_t i = 0; i < x_hat.size(); ++i)
    r.perturbation[i] = x_hat[i] - x0[i];
  r.l2 = r.perturbation.l2_norm();
  r.linf = r.perturbation.linf_norm();
  r.success = f.label(x_hat) != orig_label;
  r.iterations = iterations;
  r.example = std::move(x_hat);
  return r;
}

// Gradient of CE(F(x), label) with respect to x; x treated as a {1,p} row.
Tensor input_gradient(const IClassifier& f, const Tensor& x, int label) {
  Tensor xr = x.reshaped({1, static_cast<int>(x.size())});
  xr.requires_grad = true;
  Tape tape;
  const int xn = tape.leaf(std::move(xr));
  const int logits = f.build_logits(tape, xn);
  const int loss = tape.cross_entropy(logits, {label});
  tape.backward(loss);
  return tape.grad(xn).reshaped(x.shape());
}

// Gradient of a single logit.
Tensor logit_gradient(const IClassifier& f, const Tensor& x, int cls) {
  Tensor xr = x.reshaped({1, static_cast<int>(x.size())});
  xr.requires_grad = true;
  Tape tape;
  const int xn = tape.leaf(std::move(xr));
  const int logits = f.build_logits(tape, xn);
  const int s = tape.select(logits, cls);
  tape.backward(s);
  return tape.grad(xn).reshaped(x.shape());
}

}  // namespace

AdversarialResult bim(const IClassifier& f, const Tensor& x, int label,
                      double eps, double step, int iters, const Domain& dom) {
  if (eps < 0.0) throw std::invalid_argument("bim: eps must be >= 0");
  if (iters < 1) throw std::invalid_argument("bim: iters must be >= 1");
  const int orig = f.label(x);
  Tensor cur = x;
  bool flat = false;
  int it = 0;
  for (; it < iters; ++it) {
    const Tensor g = input_gradient(f, cur, label);
    if (g.linf_norm() == 0.0) {
      flat = it == 0;
      break;
    }
    for (std::int64_t i = 0; i < cur.size(); ++i) {
      const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      double v = cur[i] + step * s;
      // project back into the eps-ball around x
      v = std::min(x[i] + eps, std::max(x[i] - eps, v));
      cur[i] = v;
    }
    clip_box(cur, dom);
  }
  AdversarialResult r = finish(f, x, std::move(cur), orig, it);
  r.zero_gradient = flat;
  return r;
}

AdversarialResult fgsm(const IClassifier& f, const Tensor& x, int label,
                       double eps, const Domain& dom) {
  return bim(f, x, label, eps, eps, 1, dom);
}

AdversarialResult deepfool(const IClassifier& f, const Tensor& x,
                           int max_iters, double overshoot, const Domain& dom,
                           std::optional<int> true_label) {
  if (max_iters < 1)
    throw std::invalid_argument("deepfool: max_iters must be >= 1");
  const int orig = f.label(x);
  if (true_label && orig != *true_label)
    return finish(f, x, x, orig, 0);  // pre-flipped input, r = 0

  const int K = f.num_classes();
  Tensor cur = x;
  Tensor r_acc = Tensor::zeros(x.shape());
  Tensor x_hat = x;
  int it = 0;
  bool flat = false;
  for (; it < max_iters; ++it) {
    const std::vector<double> logits = f.logits(cur);
    const Tensor g_orig = logit_gradient(f, cur, orig);
    double best_l = std::numeric_limits<double>::infinity();
    Tensor best_w;
    double best_fd = 0.0;
    for (int j = 0; j < K; ++j) {
      if (j == orig) continue;
      Tensor w = logit_gradient(f, cur, j);
      for (std::int64_t i = 0; i < w.size(); ++i) w[i] -= g_orig[i];
      const double wn = w.l2_norm();
      if (wn == 0.0) continue;
      const double fd = logits[static_cast<size_t>(j)] - logits[static_cast<size_t>(orig)];
      const double l = std::fabs(fd) / wn;
      if (l < best_l) {
        best_l = l;
        best_w = std::move(w);
        best_fd = fd;
      }
    }
    if (!std::isfinite(best_l)) {
      flat = it == 0;
      break;
    }
    const double wn2 = best_w.l2_norm() * best_w.l2_norm();
    const double coef = std::fabs(best_fd) / wn2;
    for (std::int64_t i = 0; i < r_acc.size(); ++i) {
      const double ri = coef * best_w[i];
      r_acc[i] += ri;
      cur[i] += ri;
    }
    x_hat = x;
    for (std::int64_t i = 0; i < x_hat.size(); ++i)
      x_hat[i] += (1.0 + overshoot) * r_acc[i];
    clip_box(x_hat, dom);
    if (f.label(x_hat) != orig) {
      ++it;
      break;
    }
  }
  AdversarialResult r = finish(f, x, std::move(x_hat), orig, it);
  r.zero_gradient = flat;
  return r;
}

AdversarialResult carlini_wagner(const IClassifier& f, const Tensor& x,
                                 int label, double c, double kappa, int steps,
                                 double lr, const Domain& dom) {
  if (steps < 1) throw std::invalid_argument("carlini_wagner: steps must be >= 1");
  if (!dom.clip || !std::isfinite(dom.lo) || !std::isfinite(dom.hi))
    throw std::invalid_argument(
        "carlini_wagner: requires a bounded input domain (e.g. [0,1] pixels)");
  const int orig = f.label(x);
  const int K = f.num_classes();
  const double span = dom.hi - dom.lo;
  const double margin_clamp = 1e-6;  // keep atanh finite at the box edge

  // w-space variable: x_hat = lo + span*(tanh(w)+1)/2
  Tensor w(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    double u = (x[i] - dom.lo) / span;
    u = std::min(1.0 - margin_clamp, std::max(margin_clamp, u));
    w[i] = std::atanh(2.0 * u - 1.0);
  }
  w.requires_grad = true;

  Tensor m_state = Tensor::zeros(x.shape()), v_state = Tensor::zeros(x.shape());
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  auto decode = [&](const Tensor& wv) {
    Tensor out(wv.shape());
    for (std::int64_t i = 0; i < wv.size(); ++i)
      out[i] = dom.lo + span * (std::tanh(wv[i]) + 1.0) / 2.0;
    return out;
  };

  Tensor best = decode(w);
  double best_l2 = std::numeric_limits<double>::infinity();
  bool found = false;

  for (int t = 1; t <= steps; ++t) {
    const Tensor x_hat = decode(w);
    const std::vector<double> lg = f.logits(x_hat);
    int runner = -1;
    for (int j = 0; j < K; ++j)
      if (j != label && (runner < 0 || lg[static_cast<size_t>(j)] > lg[static_cast<size_t>(runner)]))
        runner = j;

    if (f.label(x_hat) != orig) {
      double l2 = 0.0;
      for (std::int64_t i = 0; i < x.size(); ++i)
        l2 += (x_hat[i] - x[i]) * (x_hat[i] - x[i]);
      l2 = std::sqrt(l2);
      if (l2 < best_l2) {
        best_l2 = l2;
        best = x_hat;
        found = true;
      }
    }

    Tape tape;
    const int wn = tape.leaf(w);
    const int th = tape.tanh_op(wn);
    const int xn =
        tape.add(tape.scale(th, span / 2.0),
                 tape.leaf(Tensor::full(x.shape(), dom.lo + span / 2.0)));
    const int xr = tape.reshape(xn, {1, static_cast<int>(x.size())});
    const int diff = tape.sub(xn, tape.leaf(x));
    const int l2n = tape.sum(tape.mul(diff, diff));
    const int logits = f.build_logits(tape, xr);
    const int margin = tape.relu(tape.add(
        tape.sub(tape.select(logits, label), tape.select(logits, runner)),
        tape.leaf(Tensor::scalar(kappa))));
    const int obj = tape.add(l2n, tape.scale(margin, c));
    tape.backward(obj);
    const Tensor& g = tape.grad(wn);
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (std::int64_t i = 0; i < w.size(); ++i) {
      m_state[i] = beta1 * m_state[i] + (1.0 - beta1) * g[i];
      v_state[i] = beta2 * v_state[i] + (1.0 - beta2) * g[i] * g[i];
      w[i] -= lr * (m_state[i] / bc1) / (std::sqrt(v_state[i] / bc2) + adam_eps);
    }
  }

  const Tensor last = decode(w);
  AdversarialResult res = finish(f, x, found ? best : last, orig, steps);
  if (found) res.success = f.label(res.example) != orig;
  return res;
}

AdversarialResult whitebox(
    const IClassifier& f, const Tensor& x, int y_c, double alpha, double eta,
    int steps, const Domain& dom,
    const std::function<int(Tape&, int x_node)>& aux_loss) {
  if (eta < 0.0) throw std::invalid_argument("whitebox: eta must be >= 0");
  if (steps < 1) throw std::invalid_argument("whitebox: steps must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("whitebox: alpha must be >= 0");
  const int orig = f.label(x);
  const double step_size = 2.5 * eta / steps;

  Tensor cur = x;
  bool flat = false;
  int it = 0;
  for (; it < steps; ++it) {
    Tensor xr = cur.reshaped({1, static_cast<int>(x.size())});
    xr.requires_grad = true;
    Tape tape;
    const int xn = tape.leaf(std::move(xr));
    const int logits = f.build_logits(tape, xn);
    int loss = tape.cross_entropy(logits, {y_c});
    if (alpha > 0.0 && aux_loss)
      loss = tape.add(loss, tape.scale(aux_loss(tape, xn), alpha));
    tape.backward(loss);
    const Tensor g = tape.grad(xn).reshaped(x.shape());
    const double gn = g.l2_norm();
    if (gn == 0.0) {
      flat = it == 0;
      break;
    }
    for (std::int64_t i = 0; i < cur.size(); ++i)
      cur[i] += step_size * g[i] / gn;  // ascent
    // project onto the L2 ball of radius eta around x
    double rn = 0.0;
    for (std::int64_t i = 0; i < cur.size(); ++i)
      rn += (cur[i] - x[i]) * (cur[i] - x[i]);
    rn = std::sqrt(rn);
    if (rn > eta) {
      const double s = eta / rn;
      for (std::int64_t i = 0; i < cur.size(); ++i)
        cur[i] = x[i] + s * (cur[i] - x[i]);
    }
    clip_box(cur, dom);
  }
  AdversarialResult r = finish(f, x, std::move(cur), orig, it);
  r.zero_gradient = flat;
  return r;
}

AdversarialResult pgd_l2(const IClassifier& f, const Tensor& x, int label,
                         double eta, int steps, const Domain& dom) {
  return whitebox(f, x, label, 0.0, eta, steps, dom, nullptr);
}

Tensor matched_noise(const Tensor& x, double ref_l2, std::uint64_t seed,
                     const Domain& dom) {
  if (ref_l2 < 0.0) throw std::invalid_argument("matched_noise: negative norm");
  Tensor out = x;
  if (ref_l2 == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor u(x.shape());
  double n = 0.0;
  do {
    for (std::int64_t i = 0; i < u.size(); ++i) u[i] = gauss(rng);
    n = u.l2_norm();
  } while (n == 0.0);
  const double s = ref_l2 / n;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += s * u[i];
  clip_box(out, dom);
  return out;
}

std::optional<AdversarialResult> run_attack(const AttackConfig& cfg,
                                            const IClassifier& f,
                                            const Tensor& x, int label,
                                            const Domain& dom) {
  cfg.validate();
  if (cfg.method == "fgsm") return fgsm(f, x, label, cfg.epsilon, dom);
  if (cfg.method == "bim")
    return bim(f, x, label, cfg.epsilon, cfg.step, cfg.iters, dom);
  if (cfg.method == "deepfool")
    return deepfool(f, x, cfg.deepfool_max_iters, cfg.overshoot, dom, label);
  if (cfg.method == "cw")
    return carlini_wagner(f, x, label, cfg.cw_c, cfg.cw_kappa, cfg.cw_steps,
                          cfg.cw_lr, dom);
  if (cfg.method == "pgd_l2")
    return pgd_l2(f, x, label, cfg.eta, cfg.iters, dom);
  throw std::invalid_argument("run_attack: unknown method '" + cfg.method + "'");
}

}  // namespace sidlab
