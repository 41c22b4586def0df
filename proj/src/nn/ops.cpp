#include "ragdial/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ragdial/common/errors.hpp"

namespace ragdial::nn::ops {

namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("op mixes variables from different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 input, got " + shape_string(t.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gi = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += s * g[i];
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(total), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).values()) v += g;
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(x, "matmul");
  require_rank2(y, "matmul");
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  if (y.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(x.shape()) + " x " + shape_string(y.shape()));
  }
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x.data()[i * k + p];
      if (xv == 0.0) continue;
      const double* yr = y.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += xv * yr[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = xb.data() + p * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += gr[j] * br[j];
          ga.data()[i * k + p] += acc;
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = xa.data()[i * k + p];
          if (av == 0.0) continue;
          double* dst = gb.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += av * gr[j];
        }
      }
    }
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2(x, "matmul_transposed");
  require_rank2(y, "matmul_transposed");
  const std::size_t n = x.rows(), k = x.cols(), m = y.rows();
  if (y.cols() != k) {
    throw ShapeError("matmul_transposed: inner dimensions differ " + shape_string(x.shape()) + " x " +
                     shape_string(y.shape()) + "^T");
  }
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* yr = y.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xr[p] * yr[p];
      out.data()[i * m + j] = acc;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double gv = g.data()[i * m + j];
        if (gv == 0.0) continue;
        if (t.requires_grad(ia)) {
          double* dst = t.grad(ia).data() + i * k;
          const double* yr = xb.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) dst[p] += gv * yr[p];
        }
        if (t.requires_grad(ib)) {
          double* dst = t.grad(ib).data() + j * k;
          const double* xr = xa.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) dst[p] += gv * xr[p];
        }
      }
    }
  });
}

Var linear(Var x, Var w, Var b) {
  Var y = matmul(x, w);
  const Tensor& yv = y.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || bv.rows() != 1 || bv.cols() != yv.cols()) {
    throw ShapeError("linear: bias shape " + shape_string(bv.shape()) + " does not match output " +
                     shape_string(yv.shape()));
  }
  Tensor out = yv;
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data()[i * m + j] += bv.data()[j];
  const std::size_t iy = y.id(), ib = b.id();
  return x.tape().record(std::move(out), {y, b}, [iy, ib, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(iy)) {
      Tensor& gy = t.grad(iy);
      for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb.data()[j] += g.data()[i * m + j];
    }
  });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var embedding(Var table, std::span<const TokenId> ids) {
  const Tensor& tv = table.value();
  require_rank2(tv, "embedding");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  std::vector<TokenId> saved(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("embedding: token id " + std::to_string(ids[i]) + " out of range for table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {table}, [it, d, saved = std::move(saved)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(it);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      double* dst = gt.data() + static_cast<std::size_t>(saved[i]) * d;
      const double* src = g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Var take_rows(Var table, std::size_t n) {
  const Tensor& tv = table.value();
  require_rank2(tv, "take_rows");
  if (n > tv.rows()) {
    throw ShapeError("take_rows: requested " + std::to_string(n) + " rows from " + shape_string(tv.shape()));
  }
  const std::size_t d = tv.cols();
  Tensor out({n, d}, std::vector<double>(tv.data(), tv.data() + n * d));
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {table}, [it](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(it);
    for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
  });
}

Var row(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require_rank2(xv, "row");
  if (r >= xv.rows()) throw ShapeError("row: index out of range");
  const std::size_t d = xv.cols();
  auto src = xv.row(r);
  Tensor out({1, d}, std::vector<double>(src.begin(), src.end()));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, r, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    double* dst = t.grad(ix).data() + r * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
  });
}

Var concat_scalars(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ShapeError("concat_scalars: no inputs");
  Tensor out = Tensor::matrix(1, scalars.size());
  std::vector<std::size_t> ids;
  for (std::size_t j = 0; j < scalars.size(); ++j) {
    require_same_tape(scalars[0], scalars[j]);
    out[j] = scalars[j].value().item();
    ids.push_back(scalars[j].id());
  }
  return scalars[0].tape().record(std::move(out), scalars, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (t.requires_grad(ids[j])) t.grad(ids[j])[0] += g[j];
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) throw ShapeError("layer_norm: affine size mismatch");
  Tensor out = Tensor::matrix(n, d);
  Tensor xhat = Tensor::matrix(n, d);
  std::vector<double> inv_std(n);
  const double* gv = gamma.value().data();
  const double* bv = beta.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * inv_std[i];
      xhat.data()[i * d + j] = h;
      out.data()[i * d + j] = h * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const double* gam = t.value(ig).data();
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad(ig);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g.data()[i * d + j] * xhat.data()[i * d + j];
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g.data()[i * d + j];
        }
        if (t.requires_grad(ix)) {
          Tensor& gx = t.grad(ix);
          std::vector<double> dh(d);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = g.data()[i * d + j] * gam[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * xhat.data()[i * d + j];
            }
            mean_dh /= static_cast<double>(d);
            mean_dh_h /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx.data()[i * d + j] += inv_std[i] * (dh[j] - mean_dh - xhat.data()[i * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor mask(x.value().shape());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? s : 0.0;
    out[i] *= mask[i];
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_rank2(qv, "attention");
  require_rank2(kv, "attention");
  require_rank2(vv, "attention");
  const std::size_t n = qv.rows(), m = kv.rows(), d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != m) throw ShapeError("attention: q/k/v shapes disagree");
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: model width not divisible by head count");
  if (causal && m < n) throw ShapeError("attention: causal mask needs at least as many keys as queries");
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs laid out [head][i][j]
  std::vector<double> probs(heads * n * m, 0.0);
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      double* p = probs.data() + (h * n + i) * m;
      const std::size_t limit = causal ? i + 1 : m;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv.data()[i * d + off + c] * kv.data()[j * d + off + c];
        p[j] = s * inv_scale;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < limit; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < limit; ++j) p[j] /= z;
      double* o = out.data() + i * d + off;
      for (std::size_t j = 0; j < limit; ++j) {
        const double pj = p[j];
        const double* vr = vv.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) o[c] += pj * vr[c];
      }
    }
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      std::move(out), {q, k, v},
      [iq, ik, iv, n, m, d, dh, heads, causal, inv_scale, probs = std::move(probs)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& qv = t.value(iq);
        const Tensor& kv = t.value(ik);
        const Tensor& vv = t.value(iv);
        const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
        std::vector<double> dp(m), ds(m);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < n; ++i) {
            const double* p = probs.data() + (h * n + i) * m;
            const std::size_t limit = causal ? i + 1 : m;
            const double* go = g.data() + i * d + off;
            double dot = 0.0;
            for (std::size_t j = 0; j < limit; ++j) {
              const double* vr = vv.data() + j * d + off;
              double acc = 0.0;
              for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vr[c];
              dp[j] = acc;
              dot += acc * p[j];
              if (gv) {
                double* dv = t.grad(iv).data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dv[c] += p[j] * go[c];
              }
            }
            for (std::size_t j = 0; j < limit; ++j) ds[j] = p[j] * (dp[j] - dot) * inv_scale;
            if (gq) {
              double* dq = t.grad(iq).data() + i * d + off;
              for (std::size_t j = 0; j < limit; ++j) {
                const double* kr = kv.data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dq[c] += ds[j] * kr[c];
              }
            }
            if (gk) {
              const double* qr = qv.data() + i * d + off;
              for (std::size_t j = 0; j < limit; ++j) {
                double* dk = t.grad(ik).data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dk[c] += ds[j] * qr[c];
              }
            }
          }
        }
      });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "log_softmax");
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i) {
    double* r = out.data() + i * m;
    const double mx = *std::max_element(r, r + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(r[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) r[j] -= lse;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < m; ++j) gs += g.data()[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        gx.data()[i * m + j] += g.data()[i * m + j] - std::exp(y.data()[i * m + j]) * gs;
      }
    }
  });
}

Var logsumexp(Var x) {
  const Tensor& xv = x.value();
  if (xv.empty()) throw ShapeError("logsumexp: empty input");
  const double mx = *std::max_element(xv.values().begin(), xv.values().end());
  double result = mx;
  if (std::isfinite(mx)) {
    double z = 0.0;
    for (double v : xv.values()) z += std::exp(v - mx);
    result = mx + std::log(z);
  }
  const std::size_t ix = x.id();
  return x.tape().record(Tensor::scalar(result), {x}, [ix, result](Tape& t, std::size_t self) {
    if (!std::isfinite(result)) return;
    const double g = t.grad(self)[0];
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g * std::exp(xv[i] - result);
  });
}

Var pick_sum(Var logp, std::span<const TokenId> targets, TokenId ignore) {
  const Tensor& lv = logp.value();
  require_rank2(lv, "pick_sum");
  const std::size_t n = lv.rows(), m = lv.cols();
  if (targets.size() != n) {
    throw ShapeError("pick_sum: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> picked;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= m) throw ShapeError("pick_sum: target out of range");
    const std::size_t idx = i * m + static_cast<std::size_t>(targets[i]);
    picked.push_back(idx);
    total += lv[idx];
  }
  const std::size_t il = logp.id();
  return logp.tape().record(Tensor::scalar(total), {logp}, [il, picked = std::move(picked)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gl = t.grad(il);
    for (std::size_t idx : picked) gl[idx] += g;
  });
}

}  // namespace ragdial::nn::ops
