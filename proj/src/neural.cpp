#include "mmforge/neural.hpp"

#include <cmath>

#include "mmforge/kernels.hpp"

namespace mmforge {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeMismatch(std::string(what) + ": got " + std::to_string(got) + ", want " +
                        std::to_string(want));
  }
}

double activate(Activation act, double z, bool smooth_ternary) {
  switch (act) {
    case Activation::Identity: return z;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu6: return z < 0.0 ? 0.0 : (z > 6.0 ? 6.0 : z);
    case Activation::Elu: return z > 0.0 ? z : std::expm1(z);
    case Activation::TernaryTanh:
      return smooth_ternary ? ternary_tanh_inner(z) : ternary_tanh_forward(z);
  }
  return z;
}

// Derivative in terms of pre-activation z and output y.
double activate_grad(Activation act, double z, double y) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Relu6: return (z > 0.0 && z < 6.0) ? 1.0 : 0.0;
    case Activation::Elu: return z > 0.0 ? 1.0 : y + 1.0;
    case Activation::TernaryTanh: {
      double th1 = std::tanh(z);
      double th3 = std::tanh(3.0 * z);
      return 1.5 * (1.0 - th1 * th1) - 1.5 * (1.0 - th3 * th3);
    }
  }
  return 1.0;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu6: return "relu6";
    case Activation::Elu: return "elu";
    case Activation::TernaryTanh: return "ternary_tanh";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu6") return Activation::Relu6;
  if (name == "elu") return Activation::Elu;
  if (name == "ternary_tanh") return Activation::TernaryTanh;
  throw std::invalid_argument("unknown activation: " + name);
}

double ternary_tanh_inner(double x) {
  return 1.5 * std::tanh(x) + 0.5 * std::tanh(-3.0 * x);
}

double ternary_tanh_forward(double x) {
  double t = ternary_tanh_inner(x);
  if (t > 0.5) return 1.0;
  if (t < -0.5) return -1.0;
  return 0.0;
}

double ternary_tanh_backward(double x, double gy) {
  double th1 = std::tanh(x);
  double th3 = std::tanh(3.0 * x);
  return gy * (1.5 * (1.0 - th1 * th1) - 1.5 * (1.0 - th3 * th3));
}

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

LayerParams make_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  LayerParams p;
  p.w = Tensor::matrix(out, in);
  p.b = Tensor::vector(out);
  p.act = act;
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : p.w.data) v = rng.uniform(-bound, bound);
  for (auto& v : p.b.data) v = rng.uniform(-bound, bound);
  return p;
}

FeedForward make_ff(std::size_t in, const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& acts, Rng& rng) {
  if (widths.size() != acts.size()) throw ShapeMismatch("make_ff: widths/activations mismatch");
  FeedForward net;
  std::size_t cur = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    net.push_back(make_layer(cur, widths[i], acts[i], rng));
    cur = widths[i];
  }
  return net;
}

LayerGrads zero_grads(const LayerParams& layer) {
  return {Tensor::matrix(layer.out_dim(), layer.in_dim()), Tensor::vector(layer.out_dim())};
}

std::vector<LayerGrads> zero_grads(const FeedForward& net) {
  std::vector<LayerGrads> g;
  g.reserve(net.size());
  for (const auto& l : net) g.push_back(zero_grads(l));
  return g;
}

std::vector<double> dense_forward(const LayerParams& layer, const std::vector<double>& x,
                                  DenseCache* cache, bool smooth_ternary) {
  check_dim(x.size(), layer.in_dim(), "dense_forward input");
  std::vector<double> z(layer.out_dim());
  kern::matvec(layer.w.ptr(), layer.out_dim(), layer.in_dim(), x.data(), layer.b.ptr(), z.data());
  std::vector<double> y(layer.out_dim());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = activate(layer.act, z[i], smooth_ternary);
  if (cache) {
    cache->x = x;
    cache->z = z;
    cache->y = y;
  }
  return y;
}

std::vector<double> dense_backward(const LayerParams& layer, const DenseCache& cache,
                                   const std::vector<double>& gy, LayerGrads& grads) {
  check_dim(gy.size(), layer.out_dim(), "dense_backward gradient");
  std::vector<double> gz(layer.out_dim());
  for (std::size_t i = 0; i < gz.size(); ++i) {
    gz[i] = gy[i] * activate_grad(layer.act, cache.z[i], cache.y[i]);
  }
  kern::outer_acc(grads.gw.ptr(), layer.out_dim(), layer.in_dim(), gz.data(), cache.x.data());
  kern::axpy(layer.out_dim(), 1.0, gz.data(), grads.gb.ptr());
  std::vector<double> gx(layer.in_dim(), 0.0);
  kern::matvec_t_acc(layer.w.ptr(), layer.out_dim(), layer.in_dim(), gz.data(), gx.data());
  return gx;
}

std::vector<double> ff_forward(const FeedForward& net, const std::vector<double>& x,
                               FeedForwardCache* cache, bool smooth_ternary) {
  std::vector<double> cur = x;
  if (cache) cache->layers.assign(net.size(), {});
  for (std::size_t i = 0; i < net.size(); ++i) {
    cur = dense_forward(net[i], cur, cache ? &cache->layers[i] : nullptr, smooth_ternary);
  }
  return cur;
}

std::vector<double> ff_backward(const FeedForward& net, const FeedForwardCache& cache,
                                const std::vector<double>& gy, std::vector<LayerGrads>& grads) {
  std::vector<double> cur = gy;
  for (std::size_t i = net.size(); i-- > 0;) {
    cur = dense_backward(net[i], cache.layers[i], cur, grads[i]);
  }
  return cur;
}

GruParams make_gru(std::size_t input, std::size_t hidden, Rng& rng) {
  GruParams g;
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto init_mat = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::matrix(r, c);
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
  };
  auto init_vec = [&](std::size_t n) {
    Tensor t = Tensor::vector(n);
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
  };
  g.wz = init_mat(hidden, input);
  g.uz = init_mat(hidden, hidden);
  g.bz = init_vec(hidden);
  g.wr = init_mat(hidden, input);
  g.ur = init_mat(hidden, hidden);
  g.br = init_vec(hidden);
  g.wc = init_mat(hidden, input);
  g.uc = init_mat(hidden, hidden);
  g.bc = init_vec(hidden);
  return g;
}

GruGrads zero_grads(const GruParams& gru) {
  std::size_t in = gru.input_dim(), hid = gru.hidden_dim();
  GruGrads g;
  g.gwz = Tensor::matrix(hid, in);
  g.guz = Tensor::matrix(hid, hid);
  g.gbz = Tensor::vector(hid);
  g.gwr = Tensor::matrix(hid, in);
  g.gur = Tensor::matrix(hid, hid);
  g.gbr = Tensor::vector(hid);
  g.gwc = Tensor::matrix(hid, in);
  g.guc = Tensor::matrix(hid, hid);
  g.gbc = Tensor::vector(hid);
  return g;
}

std::vector<double> gru_forward(const GruParams& gru, const std::vector<double>& x,
                                const std::vector<double>& h, GruCache* cache) {
  std::size_t in = gru.input_dim(), hid = gru.hidden_dim();
  check_dim(x.size(), in, "gru_forward input");
  check_dim(h.size(), hid, "gru_forward hidden");

  std::vector<double> az(hid), ar(hid), ac(hid), tmp(hid);
  kern::matvec(gru.wz.ptr(), hid, in, x.data(), gru.bz.ptr(), az.data());
  kern::matvec(gru.uz.ptr(), hid, hid, h.data(), nullptr, tmp.data());
  for (std::size_t i = 0; i < hid; ++i) az[i] += tmp[i];

  kern::matvec(gru.wr.ptr(), hid, in, x.data(), gru.br.ptr(), ar.data());
  kern::matvec(gru.ur.ptr(), hid, hid, h.data(), nullptr, tmp.data());
  for (std::size_t i = 0; i < hid; ++i) ar[i] += tmp[i];

  std::vector<double> z(hid), r(hid), rh(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    z[i] = sigmoid(az[i]);
    r[i] = sigmoid(ar[i]);
    rh[i] = r[i] * h[i];
  }

  kern::matvec(gru.wc.ptr(), hid, in, x.data(), gru.bc.ptr(), ac.data());
  kern::matvec(gru.uc.ptr(), hid, hid, rh.data(), nullptr, tmp.data());
  std::vector<double> c(hid), hnew(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    c[i] = std::tanh(ac[i] + tmp[i]);
    hnew[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
  }

  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->z = z;
    cache->r = r;
    cache->rh = rh;
    cache->c = c;
    cache->hnew = hnew;
  }
  return hnew;
}

void gru_backward(const GruParams& gru, const GruCache& cache, const std::vector<double>& ghnew,
                  std::vector<double>& gx, std::vector<double>& gh, GruGrads& grads) {
  std::size_t in = gru.input_dim(), hid = gru.hidden_dim();
  check_dim(ghnew.size(), hid, "gru_backward gradient");
  if (gx.size() != in) gx.assign(in, 0.0);
  if (gh.size() != hid) gh.assign(hid, 0.0);

  std::vector<double> gz(hid), gc(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    gz[i] = ghnew[i] * (cache.c[i] - cache.h[i]);
    gc[i] = ghnew[i] * cache.z[i];
    gh[i] += ghnew[i] * (1.0 - cache.z[i]);
  }

  // Candidate path.
  std::vector<double> gac(hid), grh(hid, 0.0);
  for (std::size_t i = 0; i < hid; ++i) gac[i] = gc[i] * (1.0 - cache.c[i] * cache.c[i]);
  kern::outer_acc(grads.gwc.ptr(), hid, in, gac.data(), cache.x.data());
  kern::outer_acc(grads.guc.ptr(), hid, hid, gac.data(), cache.rh.data());
  kern::axpy(hid, 1.0, gac.data(), grads.gbc.ptr());
  kern::matvec_t_acc(gru.wc.ptr(), hid, in, gac.data(), gx.data());
  kern::matvec_t_acc(gru.uc.ptr(), hid, hid, gac.data(), grh.data());

  std::vector<double> gr(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    gr[i] = grh[i] * cache.h[i];
    gh[i] += grh[i] * cache.r[i];
  }

  // Reset gate path.
  std::vector<double> gar(hid);
  for (std::size_t i = 0; i < hid; ++i) gar[i] = gr[i] * cache.r[i] * (1.0 - cache.r[i]);
  kern::outer_acc(grads.gwr.ptr(), hid, in, gar.data(), cache.x.data());
  kern::outer_acc(grads.gur.ptr(), hid, hid, gar.data(), cache.h.data());
  kern::axpy(hid, 1.0, gar.data(), grads.gbr.ptr());
  kern::matvec_t_acc(gru.wr.ptr(), hid, in, gar.data(), gx.data());
  kern::matvec_t_acc(gru.ur.ptr(), hid, hid, gar.data(), gh.data());

  // Update gate path.
  std::vector<double> gaz(hid);
  for (std::size_t i = 0; i < hid; ++i) gaz[i] = gz[i] * cache.z[i] * (1.0 - cache.z[i]);
  kern::outer_acc(grads.gwz.ptr(), hid, in, gaz.data(), cache.x.data());
  kern::outer_acc(grads.guz.ptr(), hid, hid, gaz.data(), cache.h.data());
  kern::axpy(hid, 1.0, gaz.data(), grads.gbz.ptr());
  kern::matvec_t_acc(gru.wz.ptr(), hid, in, gaz.data(), gx.data());
  kern::matvec_t_acc(gru.uz.ptr(), hid, hid, gaz.data(), gh.data());
}

SoftmaxCrossEntropy softmax_cross_entropy(const std::vector<double>& logits, int label) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  double logz = mx + std::log(sum);
  SoftmaxCrossEntropy out;
  out.loss = logz - logits[static_cast<std::size_t>(label)];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double p = std::exp(logits[i] - logz);
    out.grad[i] = p - (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return out;
}

std::vector<Tensor*> param_list(FeedForward& net) {
  std::vector<Tensor*> out;
  for (auto& l : net) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

std::vector<Tensor*> param_list(GruParams& gru) {
  return {&gru.wz, &gru.uz, &gru.bz, &gru.wr, &gru.ur, &gru.br, &gru.wc, &gru.uc, &gru.bc};
}

std::vector<Tensor*> grad_list(std::vector<LayerGrads>& grads) {
  std::vector<Tensor*> out;
  for (auto& g : grads) {
    out.push_back(&g.gw);
    out.push_back(&g.gb);
  }
  return out;
}

std::vector<Tensor*> grad_list(GruGrads& g) {
  return {&g.gwz, &g.guz, &g.gbz, &g.gwr, &g.gur, &g.gbr, &g.gwc, &g.guc, &g.gbc};
}

AdamState make_adam_state(const std::vector<Tensor*>& params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor::zeros(p->shape));
    s.v.push_back(Tensor::zeros(p->shape));
  }
  s.t = 0;
  return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeMismatch("adam_step: parameter/gradient/state count mismatch");
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    kern::adam_update(params[i]->size(), params[i]->ptr(), state.m[i].ptr(), state.v[i].ptr(),
                      grads[i]->ptr(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2);
  }
}

double clip_grad_norm(const std::vector<Tensor*>& grads, double max_norm) {
  double total = 0.0;
  for (const Tensor* g : grads) total += kern::sum_sq(g->ptr(), g->size());
  double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    double factor = max_norm / norm;
    for (Tensor* g : grads) kern::scale(g->ptr(), g->size(), factor);
  }
  return norm;
}

double grad_check(const FeedForward& net, const std::vector<double>& x, double eps,
                  const GradMutator& mutate) {
  // Scalar loss: sum of outputs, evaluated on the smooth surrogate so nets
  // with quantizing units have a differentiable reference.
  FeedForward work = net;
  auto loss_at = [&]() {
    std::vector<double> y = ff_forward(work, x, nullptr, /*smooth_ternary=*/true);
    double s = 0.0;
    for (double v : y) s += v;
    return s;
  };

  FeedForwardCache cache;
  std::vector<double> y = ff_forward(work, x, &cache, /*smooth_ternary=*/true);
  std::vector<LayerGrads> grads = zero_grads(work);
  std::vector<double> ones(y.size(), 1.0);
  ff_backward(work, cache, ones, grads);
  if (mutate) mutate(grads);

  double max_rel = 0.0;
  for (std::size_t li = 0; li < work.size(); ++li) {
    auto check_tensor = [&](Tensor& param, const Tensor& analytic) {
      // Error is measured against the tensor's own gradient scale, so a
      // coordinate whose true gradient is vanishingly small cannot turn
      // finite-difference roundoff into a spurious failure.
      std::vector<double> fd(param.size());
      double scale = 1e-8;
      for (std::size_t i = 0; i < param.size(); ++i) {
        double saved = param[i];
        param[i] = saved + eps;
        double up = loss_at();
        param[i] = saved - eps;
        double down = loss_at();
        param[i] = saved;
        fd[i] = (up - down) / (2.0 * eps);
        scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
      }
      for (std::size_t i = 0; i < param.size(); ++i) {
        max_rel = std::max(max_rel, std::abs(analytic[i] - fd[i]) / scale);
      }
    };
    check_tensor(work[li].w, grads[li].gw);
    check_tensor(work[li].b, grads[li].gb);
  }
  return max_rel;
}

double grad_check_gru(const GruParams& gru, const std::vector<double>& x,
                      const std::vector<double>& h, double eps) {
  GruParams work = gru;
  auto loss_at = [&]() {
    std::vector<double> y = gru_forward(work, x, h);
    double s = 0.0;
    for (double v : y) s += v;
    return s;
  };

  GruCache cache;
  std::vector<double> hnew = gru_forward(work, x, h, &cache);
  GruGrads grads = zero_grads(work);
  std::vector<double> gx, gh;
  std::vector<double> ones(hnew.size(), 1.0);
  gru_backward(work, cache, ones, gx, gh, grads);

  double max_rel = 0.0;
  std::vector<Tensor*> params = param_list(work);
  std::vector<Tensor*> analytic = grad_list(grads);
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    Tensor& param = *params[ti];
    const Tensor& a = *analytic[ti];
    std::vector<double> fd(param.size());
    double scale = 1e-8;
    for (std::size_t i = 0; i < param.size(); ++i) {
      double saved = param[i];
      param[i] = saved + eps;
      double up = loss_at();
      param[i] = saved - eps;
      double down = loss_at();
      param[i] = saved;
      fd[i] = (up - down) / (2.0 * eps);
      scale = std::max({scale, std::abs(a[i]), std::abs(fd[i])});
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      max_rel = std::max(max_rel, std::abs(a[i] - fd[i]) / scale);
    }
  }
  return max_rel;
}

}  // namespace mmforge
