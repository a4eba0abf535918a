#include "red/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "red/error.hpp"

namespace red::nc {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.value().shape() != b.value().shape()) shape_error(op, a.value(), b.value());
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(std::move(out), {a}, [deriv](Node& n) {
    Node& A = *n.parents[0];
    Tensor& g = A.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * deriv(A.value[i], n.value[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Tensor out(a.rows(), b.cols());
  gemm_nn(a.value(), b.value(), out);
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) gemm_nt(n.grad, B.value, A.grad_buffer());
    if (B.requires_grad) gemm_tn(A.value, n.grad, B.grad_buffer());
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  Tensor out(a.rows(), b.rows());
  gemm_nt(a.value(), b.value(), out);
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) gemm_nn(n.grad, B.value, A.grad_buffer());
    if (B.requires_grad) gemm_tn(n.grad, A.value, B.grad_buffer());
  });
}

Var transpose(const Var& a) {
  return make_result(a.value().transposed(), {a}, [](Node& n) {
    Node& A = *n.parents[0];
    A.grad_buffer() += n.grad.transposed();
  });
}

Var affine(const Var& x, const Var& w, const Var& bias) {
  if (x.cols() != w.rows()) shape_error("affine", x.value(), w.value());
  if (bias.rows() != 1 || bias.cols() != w.cols()) shape_error("affine bias", w.value(), bias.value());
  Tensor out(x.rows(), w.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) std::copy_n(bias.value().data(), out.cols(), out.row_ptr(r));
  gemm_nn(x.value(), w.value(), out);
  return make_result(std::move(out), {x, w, bias}, [](Node& n) {
    Node& X = *n.parents[0];
    Node& W = *n.parents[1];
    Node& B = *n.parents[2];
    if (X.requires_grad) gemm_nt(n.grad, W.value, X.grad_buffer());
    if (W.requires_grad) gemm_tn(X.value, n.grad, W.grad_buffer());
    if (B.requires_grad) {
      Tensor& g = B.grad_buffer();
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g[c] += n.grad(r, c);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node& P = *n.parents[static_cast<std::size_t>(k)];
      if (P.requires_grad) P.grad_buffer() += n.grad;
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) A.grad_buffer() += n.grad;
    if (B.requires_grad) {
      Tensor& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) {
      Tensor& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      Tensor& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * A.value[i];
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make_result(std::move(out), {a}, [s](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_rowvec", a.value(), row.value());
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()[c];
  return make_result(std::move(out), {a, row}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& R = *n.parents[1];
    if (A.requires_grad) A.grad_buffer() += n.grad;
    if (R.requires_grad) {
      Tensor& g = R.grad_buffer();
      for (std::size_t r = 0; r < n.grad.rows(); ++r)
        for (std::size_t c = 0; c < n.grad.cols(); ++c) g[c] += n.grad(r, c);
    }
  });
}

Var sin(const Var& a) {
  return unary(a, [](Real x) { return std::sin(x); }, [](Real x, Real) { return std::cos(x); });
}

Var relu(const Var& a) {
  return unary(a, [](Real x) { return x > 0 ? x : Real{0}; }, [](Real x, Real) { return x > 0 ? Real{1} : Real{0}; });
}

Var elu(const Var& a, Real alpha) {
  return unary(
      a, [alpha](Real x) { return x > 0 ? x : alpha * std::expm1(x); },
      [alpha](Real x, Real) { return x > 0 ? Real{1} : alpha * std::exp(x); });
}

Var gelu(const Var& a) {
  static constexpr Real kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr Real kK = 0.044715;
  return unary(
      a, [](Real x) { return 0.5 * x * (1 + std::tanh(kC * (x + kK * x * x * x))); },
      [](Real x, Real) {
        const Real t = std::tanh(kC * (x + kK * x * x * x));
        return 0.5 * (1 + t) + 0.5 * x * (1 - t * t) * kC * (1 + 3 * kK * x * x);
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols of nothing");
  const auto rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(p.value().row_ptr(r), p.cols(), out.row_ptr(r) + offset);
    offset += p.cols();
  }
  return make_result(std::move(out), parts, [](Node& n) {
    std::size_t offset = 0;
    for (auto& P : n.parents) {
      const auto pc = P->value.cols();
      if (P->requires_grad) {
        Tensor& g = P->grad_buffer();
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) g(r, c) += n.grad(r, offset + c);
      }
      offset += pc;
    }
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols())
    throw ContractViolation("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                            ") out of range for " + shape_string(a.value()));
  Tensor out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) std::copy_n(a.value().row_ptr(r) + start, count, out.row_ptr(r));
  return make_result(std::move(out), {a}, [start, count](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) g(r, start + c) += n.grad(r, c);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows of nothing");
  const auto cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset * cols);
    offset += p.rows();
  }
  return make_result(std::move(out), parts, [](Node& n) {
    std::size_t offset = 0;
    for (auto& P : n.parents) {
      const auto sz = P->value.size();
      if (P->requires_grad) {
        Tensor& g = P->grad_buffer();
        const Real* src = n.grad.data() + offset;
        for (std::size_t i = 0; i < sz; ++i) g[i] += src[i];
      }
      offset += sz;
    }
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const auto cols = a.cols();
  Tensor out(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows())
      throw ContractViolation("gather_rows index " + std::to_string(rows[i]) + " out of range for " +
                              shape_string(a.value()));
    std::copy_n(a.value().row_ptr(rows[i]), cols, out.row_ptr(i));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    const auto cols = g.cols();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Real* dst = g.row_ptr(idx[i]);
      const Real* src = n.grad.row_ptr(i);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size())
    throw ContractViolation("reshape " + shape_string(a.value()) + " to [" + std::to_string(rows) + " x " +
                            std::to_string(cols) + "]");
  Tensor out(rows, cols, std::vector<Real>(a.value().span().begin(), a.value().span().end()));
  return make_result(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Var average_column_blocks(const Var& a, std::size_t blocks) {
  if (blocks == 0 || a.cols() % blocks != 0)
    throw ContractViolation("average_column_blocks: " + std::to_string(a.cols()) + " columns not divisible by " +
                            std::to_string(blocks));
  const auto d = a.cols() / blocks;
  const Real inv = Real{1} / static_cast<Real>(blocks);
  Tensor out(a.rows(), d);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t c = 0; c < d; ++c) out(r, c) += a.value()(r, b * d + c) * inv;
  return make_result(std::move(out), {a}, [blocks, d, inv](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t c = 0; c < d; ++c) g(r, b * d + c) += n.grad(r, c) * inv;
  });
}

Var masked_fill(const Var& a, std::span<const char> mask, Real value) {
  if (mask.size() != a.value().size()) throw ContractViolation("masked_fill: mask size mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  std::vector<char> m(mask.begin(), mask.end());
  return make_result(std::move(out), {a}, [m = std::move(m)](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!m[i]) g[i] += n.grad[i];
  });
}

namespace {

Var softmax_impl(const Var& x, std::span<const char> allowed) {
  const Tensor& in = x.value();
  const auto rows = in.rows(), cols = in.cols();
  const bool masked = !allowed.empty();
  if (masked && allowed.size() != in.size()) throw ContractViolation("softmax_rows: mask size mismatch");
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = in.row_ptr(r);
    Real* yr = out.row_ptr(r);
    const char* ar = masked ? allowed.data() + r * cols : nullptr;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (!masked || ar[c]) mx = std::max(mx, xr[c]);
    if (mx == -std::numeric_limits<Real>::infinity())
      throw ContractViolation("softmax_rows: row " + std::to_string(r) + " has no allowed entries");
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (masked && !ar[c]) continue;
      yr[c] = std::exp(xr[c] - mx);
      total += yr[c];
    }
    const Real inv = Real{1} / total;
    for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
  return make_result(std::move(out), {x}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    const auto cols = n.value.cols();
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      const Real* y = n.value.row_ptr(r);
      const Real* dy = n.grad.row_ptr(r);
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      Real* dx = g.row_ptr(r);
      for (std::size_t c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
    }
  });
}

}  // namespace

Var softmax_rows(const Var& x) { return softmax_impl(x, {}); }
Var softmax_rows(const Var& x, std::span<const char> allowed) { return softmax_impl(x, allowed); }

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Tensor& in = x.value();
  const auto rows = in.rows(), cols = in.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols) shape_error("layer_norm gamma", in, gamma.value());
  if (beta.rows() != 1 || beta.cols() != cols) shape_error("layer_norm beta", in, beta.value());
  Tensor out(rows, cols);
  Tensor xhat(rows, cols);
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = in.row_ptr(r);
    Real mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<Real>(cols);
    Real var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<Real>(cols);
    inv_std[r] = Real{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xr[c] - mu) * inv_std[r];
      out(r, c) = xhat(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                       Node& X = *n.parents[0];
                       Node& G = *n.parents[1];
                       Node& B = *n.parents[2];
                       const auto rows = n.value.rows(), cols = n.value.cols();
                       const Real inv_n = Real{1} / static_cast<Real>(cols);
                       std::vector<Real> dxhat(cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const Real* dy = n.grad.row_ptr(r);
                         const Real* xh = xhat.row_ptr(r);
                         if (G.requires_grad) {
                           Tensor& g = G.grad_buffer();
                           for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c] * xh[c];
                         }
                         if (B.requires_grad) {
                           Tensor& g = B.grad_buffer();
                           for (std::size_t c = 0; c < cols; ++c) g[c] += dy[c];
                         }
                         if (X.requires_grad) {
                           Real s1 = 0, s2 = 0;
                           for (std::size_t c = 0; c < cols; ++c) {
                             dxhat[c] = dy[c] * G.value[c];
                             s1 += dxhat[c];
                             s2 += dxhat[c] * xh[c];
                           }
                           Real* dx = X.grad_buffer().row_ptr(r);
                           for (std::size_t c = 0; c < cols; ++c)
                             dx[c] += inv_std[r] * (dxhat[c] - inv_n * s1 - xh[c] * inv_n * s2);
                         }
                       }
                     });
}

Var sum(const Var& a) {
  Real total = 0;
  for (Real v : a.value().span()) total += v;
  return make_result(Tensor::scalar(total), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    const Real d = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ContractViolation("mean of empty tensor");
  return scale(sum(a), Real{1} / static_cast<Real>(a.value().size()));
}

Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets, std::span<const char> ignore) {
  const Tensor& z = logits.value();
  const auto rows = z.rows(), classes = z.cols();
  if (targets.size() != rows)
    throw ContractViolation("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(rows) + " rows");
  if (!ignore.empty() && ignore.size() != rows) throw ContractViolation("cross_entropy: ignore mask size mismatch");
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!ignore.empty() && ignore[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= classes)
      throw ValidationError("cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " +
                            std::to_string(classes) + ")");
    ++counted;
  }
  if (counted == 0) throw ValidationError("cross_entropy: every row is ignored");

  Tensor probs(rows, classes);
  Real loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!ignore.empty() && ignore[r]) continue;
    const Real* zr = z.row_ptr(r);
    const Real mx = *std::max_element(zr, zr + classes);
    Real total = 0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(zr[c] - mx);
    const Real log_total = std::log(total);
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) = std::exp(zr[c] - mx - log_total);
    loss -= zr[targets[r]] - mx - log_total;
  }
  const Real inv = Real{1} / static_cast<Real>(counted);
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  std::vector<char> ig(ignore.begin(), ignore.end());
  return make_result(Tensor::scalar(loss * inv), {logits},
                     [probs = std::move(probs), tg = std::move(tg), ig = std::move(ig), inv](Node& n) {
                       Tensor& g = n.parents[0]->grad_buffer();
                       const Real d = n.grad[0] * inv;
                       for (std::size_t r = 0; r < probs.rows(); ++r) {
                         if (!ig.empty() && ig[r]) continue;
                         Real* gr = g.row_ptr(r);
                         const Real* pr = probs.row_ptr(r);
                         for (std::size_t c = 0; c < probs.cols(); ++c) gr[c] += d * pr[c];
                         gr[tg[r]] -= d;
                       }
                     });
}

Var mse_loss(const Var& pred, const Tensor& target) {
  if (pred.value().shape() != target.shape()) shape_error("mse_loss", pred.value(), target);
  if (target.size() == 0) throw ValidationError("mse_loss: empty input");
  Real total = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Real d = pred.value()[i] - target[i];
    total += d * d;
  }
  const Real inv = Real{1} / static_cast<Real>(target.size());
  return make_result(Tensor::scalar(total * inv), {pred}, [target, inv](Node& n) {
    Node& P = *n.parents[0];
    Tensor& g = P.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * 2 * inv * (P.value[i] - target[i]);
  });
}

Var dropout(const Var& a, Real p, std::mt19937_64& rng, bool training) {
  if (!(p >= 0 && p < 1)) throw ValidationError("dropout probability must lie in [0, 1)");
  if (!training || p == 0) return a;
  std::bernoulli_distribution keep(1 - p);
  const Real s = Real{1} / (1 - p);
  Tensor mask(a.rows(), a.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : Real{0};
  return mul(a, Var::constant(std::move(mask)));
}

Var graph_attention(const Var& projected, const Var& att_src, const Var& att_dst, const GraphAdjacency& graph,
                    std::size_t heads, Real negative_slope) {
  const Tensor& P = projected.value();
  const auto n = P.rows(), width = P.cols();
  if (n != graph.num_nodes())
    throw ContractViolation("graph_attention: " + std::to_string(n) + " rows for " +
                            std::to_string(graph.num_nodes()) + " nodes");
  if (heads == 0 || width % heads != 0)
    throw ContractViolation("graph_attention: width " + std::to_string(width) + " not divisible by heads");
  if (att_src.rows() != 1 || att_src.cols() != width) shape_error("graph_attention att_src", P, att_src.value());
  if (att_dst.rows() != 1 || att_dst.cols() != width) shape_error("graph_attention att_dst", P, att_dst.value());
  const auto d = width / heads;

  // Per-node, per-head attention halves.
  Tensor src_score(n, heads), dst_score(n, heads);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      Real s = 0, t = 0;
      for (std::size_t c = 0; c < d; ++c) {
        s += P(i, h * d + c) * att_src.value()[h * d + c];
        t += P(i, h * d + c) * att_dst.value()[h * d + c];
      }
      src_score(i, h) = s;
      dst_score(i, h) = t;
    }

  // alpha and pre-activation logits, flattened per (node, neighbor, head).
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.sources[i].empty()) throw ContractViolation("graph_attention: node without sources");
    offsets[i + 1] = offsets[i] + graph.sources[i].size() * heads;
  }
  std::vector<Real> alpha(offsets[n]), logits(offsets[n]);
  Tensor out(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& src = graph.sources[i];
    for (std::size_t h = 0; h < heads; ++h) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < src.size(); ++k) {
        const Real z = src_score(src[k], h) + dst_score(i, h);
        logits[offsets[i] + k * heads + h] = z;
        const Real e = z > 0 ? z : negative_slope * z;
        alpha[offsets[i] + k * heads + h] = e;
        mx = std::max(mx, e);
      }
      Real total = 0;
      for (std::size_t k = 0; k < src.size(); ++k) {
        Real& a = alpha[offsets[i] + k * heads + h];
        a = std::exp(a - mx);
        total += a;
      }
      for (std::size_t k = 0; k < src.size(); ++k) {
        Real& a = alpha[offsets[i] + k * heads + h];
        a /= total;
        const Real* pj = P.row_ptr(src[k]) + h * d;
        Real* oi = out.row_ptr(i) + h * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += a * pj[c];
      }
    }
  }

  return make_result(
      std::move(out), {projected, att_src, att_dst},
      [graph = graph.sources, heads, d, negative_slope, offsets = std::move(offsets), alpha = std::move(alpha),
       logits = std::move(logits)](Node& node) {
        Node& PN = *node.parents[0];
        Node& AS = *node.parents[1];
        Node& AD = *node.parents[2];
        const Tensor& P = PN.value;
        const auto n = P.rows();
        Tensor d_src(n, heads), d_dst(n, heads);
        Tensor* dP = PN.requires_grad ? &PN.grad_buffer() : nullptr;
        std::vector<Real> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& src = graph[i];
          dalpha.assign(src.size(), 0);
          for (std::size_t h = 0; h < heads; ++h) {
            const Real* go = node.grad.row_ptr(i) + h * d;
            Real weighted = 0;
            for (std::size_t k = 0; k < src.size(); ++k) {
              const Real a = alpha[offsets[i] + k * heads + h];
              const Real* pj = P.row_ptr(src[k]) + h * d;
              Real da = 0;
              for (std::size_t c = 0; c < d; ++c) da += go[c] * pj[c];
              dalpha[k] = da;
              weighted += a * da;
              if (dP) {
                Real* gj = dP->row_ptr(src[k]) + h * d;
                for (std::size_t c = 0; c < d; ++c) gj[c] += a * go[c];
              }
            }
            for (std::size_t k = 0; k < src.size(); ++k) {
              const Real a = alpha[offsets[i] + k * heads + h];
              const Real z = logits[offsets[i] + k * heads + h];
              const Real dz = a * (dalpha[k] - weighted) * (z > 0 ? Real{1} : negative_slope);
              d_src(src[k], h) += dz;
              d_dst(i, h) += dz;
            }
          }
        }
        Tensor* dAS = AS.requires_grad ? &AS.grad_buffer() : nullptr;
        Tensor* dAD = AD.requires_grad ? &AD.grad_buffer() : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t h = 0; h < heads; ++h) {
            const Real ds = d_src(i, h), dd = d_dst(i, h);
            for (std::size_t c = 0; c < d; ++c) {
              const auto col = h * d + c;
              if (dP) (*dP)(i, col) += ds * AS.value[col] + dd * AD.value[col];
              if (dAS) (*dAS)[col] += ds * P(i, col);
              if (dAD) (*dAD)[col] += dd * P(i, col);
            }
          }
      });
}

}  // namespace red::nc
