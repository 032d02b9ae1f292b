#include "catsnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace catsnn::ops {
namespace {

Graph& graph_of(const Var& a) {
  if (!a.valid()) throw StateError("op on an unbound Var");
  return *a.graph();
}

bool is_scalar_operand(const Var& b) { return b.size() == 1; }

void check_binary(const char* op, const Var& a, const Var& b) {
  if (a.graph() != b.graph()) throw ContractError(std::string(op) + ": operands on different graphs");
  if (a.shape() != b.shape() && !is_scalar_operand(b))
    throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
}

// Valid output range [lo, hi) along one spatial axis for kernel offset k.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  // need 0 <= o*stride + k - pad < in
  std::ptrdiff_t lo_num = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
  std::ptrdiff_t lo = lo_num <= 0 ? 0 : (lo_num + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t hi_num = static_cast<std::ptrdiff_t>(in) - 1 + static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
  std::ptrdiff_t hi = hi_num < 0 ? 0 : hi_num / static_cast<std::ptrdiff_t>(stride) + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw DimensionError("matmul: shapes " + to_string(A.shape()) + " and " + to_string(B.shape()));
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return graph_of(a).record("matmul", std::move(out), {a, b}, [pa, pb, m, k, n](const Tensor& g, auto gin) {
    if (Tensor* ga = gin[0])  // G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * (*pb)[p * n + j];
          (*ga)[i * k + p] += acc;
        }
    if (Tensor* gb = gin[1])  // A^T * G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = (*pa)[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += av * g[i * n + j];
        }
  });
}

Var transpose(const Var& a) {
  const auto& A = a.value();
  if (A.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + to_string(A.shape()));
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  return graph_of(a).record("transpose", std::move(out), {a}, [r, c](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gin[0])[i * c + j] += g[j * r + i];
  });
}

Var linear(const Var& x, const Var& w) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.rank() != 2 || W.rank() != 2 || X.dim(1) != W.dim(1))
    throw DimensionError("linear: input " + to_string(X.shape()) + " vs weight " + to_string(W.shape()));
  const std::size_t n = X.dim(0), in = X.dim(1), outf = W.dim(0);
  Tensor out(Shape{n, outf});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < outf; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += X[b * in + i] * W[o * in + i];
      out[b * outf + o] = acc;
    }
  const Tensor* px = &X;
  const Tensor* pw = &W;
  return graph_of(x).record("linear", std::move(out), {x, w}, [px, pw, n, in, outf](const Tensor& g, auto gin) {
    if (Tensor* gx = gin[0])
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < outf; ++o) {
          const double gv = g[b * outf + o];
          if (gv == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) (*gx)[b * in + i] += gv * (*pw)[o * in + i];
        }
    if (Tensor* gw = gin[1])
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < outf; ++o) {
          const double gv = g[b * outf + o];
          if (gv == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) (*gw)[o * in + i] += gv * (*px)[b * in + i];
        }
  });
}

Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad) {
  const auto& X = x.value();
  const auto& Wt = w.value();
  if (X.rank() != 4 || Wt.rank() != 4 || X.dim(1) != Wt.dim(1))
    throw DimensionError("conv2d: input " + to_string(X.shape()) + " vs weight " + to_string(Wt.shape()));
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t N = X.dim(0), Cin = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  const std::size_t Cout = Wt.dim(0), KH = Wt.dim(2), KW = Wt.dim(3);
  if (KH > H + 2 * pad || KW > Wd + 2 * pad)
    throw DimensionError("conv2d: kernel " + to_string(Wt.shape()) + " larger than padded input " +
                         to_string(X.shape()));
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
  const std::size_t OW = (Wd + 2 * pad - KW) / stride + 1;

  Tensor out(Shape{N, Cout, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co) {
      double* op = &out[((n * Cout) + co) * OH * OW];
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xp = &X[((n * Cin) + ci) * H * Wd];
        const double* wp = &Wt[((co * Cin) + ci) * KH * KW];
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const auto [oh0, oh1] = valid_range(OH, H, kh, stride, pad);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const double wv = wp[kh * KW + kw];
            const auto [ow0, ow1] = valid_range(OW, Wd, kw, stride, pad);
            for (std::size_t oh = oh0; oh < oh1; ++oh) {
              const double* xr = xp + (oh * stride + kh - pad) * Wd;
              double* orow = op + oh * OW;
              for (std::size_t ow = ow0; ow < ow1; ++ow) orow[ow] += xr[ow * stride + kw - pad] * wv;
            }
          }
        }
      }
    }

  const Tensor* px = &X;
  const Tensor* pw = &Wt;
  return graph_of(x).record(
      "conv2d", std::move(out), {x, w},
      [=](const Tensor& g, auto gin) {
        Tensor* gx = gin[0];
        Tensor* gw = gin[1];
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* gp = &g[((n * Cout) + co) * OH * OW];
            for (std::size_t ci = 0; ci < Cin; ++ci) {
              const std::size_t xoff = ((n * Cin) + ci) * H * Wd;
              const std::size_t woff = ((co * Cin) + ci) * KH * KW;
              for (std::size_t kh = 0; kh < KH; ++kh) {
                const auto [oh0, oh1] = valid_range(OH, H, kh, stride, pad);
                for (std::size_t kw = 0; kw < KW; ++kw) {
                  const auto [ow0, ow1] = valid_range(OW, Wd, kw, stride, pad);
                  const double wv = (*pw)[woff + kh * KW + kw];
                  double acc = 0.0;
                  for (std::size_t oh = oh0; oh < oh1; ++oh) {
                    const std::size_t xr = xoff + (oh * stride + kh - pad) * Wd;
                    const double* grow = gp + oh * OW;
                    for (std::size_t ow = ow0; ow < ow1; ++ow) {
                      const std::size_t xi = xr + ow * stride + kw - pad;
                      if (gx) (*gx)[xi] += grow[ow] * wv;
                      acc += grow[ow] * (*px)[xi];
                    }
                  }
                  if (gw) (*gw)[woff + kh * KW + kw] += acc;
                }
              }
            }
          }
      });
}

Var avg_pool2d(const Var& x, std::size_t k) {
  const auto& X = x.value();
  if (X.rank() != 4) throw DimensionError("avg_pool2d: expected rank 4, got " + to_string(X.shape()));
  if (k == 0 || X.dim(2) < k || X.dim(3) < k)
    throw DimensionError("avg_pool2d: window " + std::to_string(k) + " does not fit " + to_string(X.shape()));
  const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const std::size_t OH = H / k, OW = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  Tensor out(Shape{N, C, OH, OW});
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) acc += X[(p * H + oh * k + i) * W + ow * k + j];
        out[(p * OH + oh) * OW + ow] = acc * inv;
      }
  return graph_of(x).record("avg_pool2d", std::move(out), {x}, [=](const Tensor& g, auto gin) {
    Tensor& gx = *gin[0];
    for (std::size_t p = 0; p < N * C; ++p)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const double gv = g[(p * OH + oh) * OW + ow] * inv;
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) gx[(p * H + oh * k + i) * W + ow * k + j] += gv;
        }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return graph_of(x).record("reshape", std::move(out), {x}, [](const Tensor& g, auto gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var flatten(const Var& x) {
  const auto& s = x.shape();
  return reshape(x, Shape{s[0], x.size() / s[0]});
}

Var add(const Var& a, const Var& b) {
  check_binary("add", a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  const bool bs = B.size() == 1 && A.size() != 1;
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bs ? B[0] : B[i];
  return graph_of(a).record("add", std::move(out), {a, b}, [bs](const Tensor& g, auto gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[bs ? 0 : i] += g[i];
  });
}

Var sub(const Var& a, const Var& b) {
  check_binary("sub", a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  const bool bs = B.size() == 1 && A.size() != 1;
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bs ? B[0] : B[i];
  return graph_of(a).record("sub", std::move(out), {a, b}, [bs](const Tensor& g, auto gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[bs ? 0 : i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  check_binary("mul", a, b);
  const auto& A = a.value();
  const auto& B = b.value();
  const bool bs = B.size() == 1 && A.size() != 1;
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bs ? B[0] : B[i];
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return graph_of(a).record("mul", std::move(out), {a, b}, [pa, pb, bs](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double bv = bs ? (*pb)[0] : (*pb)[i];
      if (gin[0]) (*gin[0])[i] += g[i] * bv;
      if (gin[1]) (*gin[1])[bs ? 0 : i] += g[i] * (*pa)[i];
    }
  });
}

Var add(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  return graph_of(a).record("add_scalar", std::move(out), {a}, [](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return graph_of(a).record("scale", std::move(out), {a}, [s](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
  });
}

Var square(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= v;
  const Tensor* pa = &a.value();
  return graph_of(a).record("square", std::move(out), {a}, [pa](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 2.0 * (*pa)[i] * g[i];
  });
}

Var clamp(const Var& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  const Tensor* pa = &a.value();
  return graph_of(a).record("clamp", std::move(out), {a}, [pa, lo, hi](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = (*pa)[i];
      if (v > lo && v < hi) (*gin[0])[i] += g[i];
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const Tensor* pa = &a.value();
  return graph_of(a).record("relu", std::move(out), {a}, [pa](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*pa)[i] > 0.0) (*gin[0])[i] += g[i];
  });
}

namespace {

// Output slot of every input element under reduction over `axes`.
std::pair<Shape, std::vector<std::size_t>> reduction_map(const Shape& in, std::vector<std::size_t> axes) {
  if (axes.empty())
    for (std::size_t i = 0; i < in.size(); ++i) axes.push_back(i);
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) {
    if (ax >= in.size())
      throw DimensionError("reduce: axis " + std::to_string(ax) + " out of range for " + to_string(in));
    reduced[ax] = true;
  }
  Shape out;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!reduced[i]) out.push_back(in[i]);
  if (out.empty()) out.push_back(1);

  const std::size_t total = shape_numel(in);
  std::vector<std::size_t> slot(total);
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < in.size(); ++d)
      if (!reduced[d]) o = o * in[d] + idx[d];
    slot[flat] = o;
    for (std::size_t d = in.size(); d-- > 0;) {
      if (++idx[d] < in[d]) break;
      idx[d] = 0;
    }
  }
  return {out, std::move(slot)};
}

Var reduce(const char* op, const Var& a, std::vector<std::size_t> axes, bool average) {
  auto [shape, slot] = reduction_map(a.shape(), std::move(axes));
  Tensor out(shape, 0.0);
  const auto& A = a.value();
  for (std::size_t i = 0; i < A.size(); ++i) out[slot[i]] += A[i];
  const double factor = average ? static_cast<double>(out.size()) / static_cast<double>(A.size()) : 1.0;
  if (average)
    for (auto& v : out.values()) v *= factor;
  return graph_of(a).record(op, std::move(out), {a}, [slot = std::move(slot), factor](const Tensor& g, auto gin) {
    auto& ga = *gin[0];
    for (std::size_t i = 0; i < slot.size(); ++i) ga[i] += g[slot[i]] * factor;
  });
}

}  // namespace

Var sum(const Var& a, std::vector<std::size_t> axes) { return reduce("sum", a, std::move(axes), false); }
Var mean(const Var& a, std::vector<std::size_t> axes) { return reduce("mean", a, std::move(axes), true); }

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const auto& Z = logits.value();
  if (Z.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be N x K, got " + to_string(Z.shape()));
  const std::size_t N = Z.dim(0), K = Z.dim(1);
  if (labels.size() != N)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(N) + " rows");
  Tensor prob(Shape{N, K});
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw ContractError("softmax_cross_entropy: label out of range");
    const double* z = &Z[n * K];
    const double zmax = *std::max_element(z, z + K);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(z[k] - zmax);
    for (std::size_t k = 0; k < K; ++k) prob[n * K + k] = std::exp(z[k] - zmax) / denom;
    loss += std::log(denom) + zmax - z[y];
  }
  loss /= static_cast<double>(N);
  return graph_of(logits).record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits},
      [prob = std::move(prob), labels, N, K](const Tensor& g, auto gin) {
        auto& gz = *gin[0];
        const double s = g[0] / static_cast<double>(N);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k) {
            const double onehot = static_cast<int>(k) == labels[n] ? 1.0 : 0.0;
            gz[n * K + k] += s * (prob[n * K + k] - onehot);
          }
      });
}

Var gather(const Var& table, const std::vector<std::int32_t>& index, Shape shape) {
  const auto& T = table.value();
  if (shape_numel(shape) != index.size())
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for shape " + to_string(shape));
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= T.size())
      throw ContractError("gather: index out of range");
    out[i] = T[static_cast<std::size_t>(index[i])];
  }
  return graph_of(table).record("gather", std::move(out), {table}, [index](const Tensor& g, auto gin) {
    auto& gt = *gin[0];
    for (std::size_t i = 0; i < index.size(); ++i) gt[static_cast<std::size_t>(index[i])] += g[i];
  });
}

Var channel_scale(const Var& x, const Var& gate) {
  const auto& X = x.value();
  const auto& G = gate.value();
  if (X.rank() < 2 || G.size() != X.dim(1))
    throw DimensionError("channel_scale: gate of " + std::to_string(G.size()) + " for input " +
                         to_string(X.shape()));
  const std::size_t N = X.dim(0), C = X.dim(1), inner = X.size() / (N * C);
  Tensor out = X;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < inner; ++i) out[(n * C + c) * inner + i] *= G[c];
  const Tensor* px = &X;
  const Tensor* pg = &G;
  return graph_of(x).record("channel_scale", std::move(out), {x, gate}, [=](const Tensor& g, auto gin) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = (n * C + c) * inner + i;
          if (gin[0]) (*gin[0])[k] += g[k] * (*pg)[c];
          if (gin[1]) (*gin[1])[c] += g[k] * (*px)[k];
        }
  });
}

}  // namespace catsnn::ops
