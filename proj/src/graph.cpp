#include "protox/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace protox {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("variable does not belong to this graph");
  return nodes_[v.id];
}

template <typename T>
typename Graph<T>::Var Graph<T>::push(Tensor<T> value, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (recording_) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
typename Graph<T>::Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), nullptr);
}

template <typename T>
typename Graph<T>::Var Graph<T>::parameter(Tensor<T>& source) {
  auto v = push(source, nullptr);
  if (recording_) nodes_[v.id].source = &source;
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::matmul(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  require(B.rows() == k, "matmul: inner dimensions differ: " + shape_string(A.shape()) + " x " +
                             shape_string(B.shape()));
  Tensor<T> C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* c = &C.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A.at(i, p);
      const T* brow = &B.at(p, 0);
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return push(std::move(C), [a, b, m, k, n](Graph& g, std::uint32_t self) {
    const auto& dC = g.nodes_[self].grad;
    const auto& Av = g.nodes_[a.id].value;
    const auto& Bv = g.nodes_[b.id].value;
    auto& dA = g.grad_buf(a.id);
    auto& dB = g.grad_buf(b.id);
    // dA = dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        T acc = 0;
        const T* brow = &Bv.at(p, 0);
        const T* dc = &dC[i * n];
        for (std::size_t j = 0; j < n; ++j) acc += dc[j] * brow[j];
        dA[i * k + p] += acc;
      }
    }
    // dB = A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      const T* dc = &dC[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        const T av = Av.at(i, p);
        T* db = &dB[p * n];
        for (std::size_t j = 0; j < n; ++j) db[j] += av * dc[j];
      }
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::transpose(Var a) {
  const auto& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = A.at(i, j);
  return push(std::move(out), [a, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += d[j * r + i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::add(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  require(A.size() == B.size() && A.cols() == B.cols(),
          "add: shapes differ: " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return push(std::move(out), [a, b](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
    auto& db = g.grad_buf(b.id);
    for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::sub(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  require(A.size() == B.size() && A.cols() == B.cols(),
          "sub: shapes differ: " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return push(std::move(out), [a, b](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
    auto& db = g.grad_buf(b.id);
    for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::add_row(Var a, Var bias) {
  const auto& A = node(a).value;
  const auto& B = node(bias).value;
  const std::size_t r = A.rows(), c = A.cols();
  require(B.size() == c, "add_row: bias " + shape_string(B.shape()) + " does not fit rows of " +
                             shape_string(A.shape()));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) += B[j];
  return push(std::move(out), [a, bias, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
    auto& db = g.grad_buf(bias.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) db[j] += d[i * c + j];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::scale(Var a, T s) {
  Tensor<T> out = node(a).value;
  for (auto& v : out.data()) v *= s;
  return push(std::move(out), [a, s](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += s * d[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::add_scalar(Var a, T s) {
  Tensor<T> out = node(a).value;
  for (auto& v : out.data()) v += s;
  return push(std::move(out), [a](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::div(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  require(A.size() == B.size(),
          "div: shapes differ: " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= B[i];
  return push(std::move(out), [a, b](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& Av = g.nodes_[a.id].value;
    const auto& Bv = g.nodes_[b.id].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] / Bv[i];
    auto& db = g.grad_buf(b.id);
    for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i] * Av[i] / (Bv[i] * Bv[i]);
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::softmax_lastdim(Var a) {
  const auto& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> y = A;
  for (std::size_t i = 0; i < r; ++i) {
    auto row = y.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T total = 0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  return push(std::move(y), [a, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& Y = g.nodes_[self].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += d[i * c + j] * Y.at(i, j);
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += Y.at(i, j) * (d[i * c + j] - dot);
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::log_softmax_lastdim(Var a) {
  const auto& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> y = A;
  for (std::size_t i = 0; i < r; ++i) {
    auto row = y.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T total = 0;
    for (auto v : row) total += std::exp(v - mx);
    const T lse = mx + std::log(total);
    for (auto& v : row) v -= lse;
  }
  return push(std::move(y), [a, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& Y = g.nodes_[self].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      T dsum = 0;
      for (std::size_t j = 0; j < c; ++j) dsum += d[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        da[i * c + j] += d[i * c + j] - std::exp(Y.at(i, j)) * dsum;
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::layernorm(Var x, Var gain, Var bias, T eps) {
  const auto& X = node(x).value;
  const std::size_t r = X.rows(), c = X.cols();
  require(node(gain).value.size() == c && node(bias).value.size() == c,
          "layernorm: gain/bias must have " + std::to_string(c) + " entries");
  const auto& G = node(gain).value;
  const auto& B = node(bias).value;
  Tensor<T> y = X;
  std::vector<T> xhat(X.size());
  std::vector<T> inv(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto row = X.row(i);
    T mean = 0;
    for (auto v : row) mean += v;
    mean /= static_cast<T>(c);
    T var = 0;
    for (auto v : row) var += (v - mean) * (v - mean);
    var /= static_cast<T>(c);
    inv[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mean) * inv[i];
      y.at(i, j) = xhat[i * c + j] * G[j] + B[j];
    }
  }
  return push(std::move(y), [x, gain, bias, r, c, xhat = std::move(xhat), inv = std::move(inv)](
                                Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& G = g.nodes_[gain.id].value;
    auto& dx = g.grad_buf(x.id);
    auto& dg = g.grad_buf(gain.id);
    auto& db = g.grad_buf(bias.id);
    const T n = static_cast<T>(c);
    for (std::size_t i = 0; i < r; ++i) {
      T sum_dxh = 0, sum_dxh_xh = 0;
      for (std::size_t j = 0; j < c; ++j) {
        const T dxh = d[i * c + j] * G[j];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xhat[i * c + j];
        dg[j] += d[i * c + j] * xhat[i * c + j];
        db[j] += d[i * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) {
        const T dxh = d[i * c + j] * G[j];
        dx[i * c + j] += inv[i] / n * (n * dxh - sum_dxh - xhat[i * c + j] * sum_dxh_xh);
      }
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::gelu(Var a) {
  Tensor<T> y = node(a).value;
  for (auto& v : y.data()) v = T{0.5} * v * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
  return push(std::move(y), [a](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& X = g.nodes_[a.id].value;
    auto& da = g.grad_buf(a.id);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = X[i];
      const T cdf = T{0.5} * (T{1} + std::erf(v / std::numbers::sqrt2_v<T>));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      da[i] += d[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::exp(Var a) {
  Tensor<T> y = node(a).value;
  for (auto& v : y.data()) v = std::exp(v);
  return push(std::move(y), [a](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& Y = g.nodes_[self].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * Y[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::log(Var a) {
  Tensor<T> y = node(a).value;
  for (auto& v : y.data()) v = std::log(v);
  return push(std::move(y), [a](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& X = g.nodes_[a.id].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] / X[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::map(Var a, std::function<T(T)> f, std::function<T(T)> df) {
  Tensor<T> y = node(a).value;
  for (auto& v : y.data()) v = f(v);
  return push(std::move(y), [a, df = std::move(df)](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& X = g.nodes_[a.id].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * df(X[i]);
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::mean_rows(Var a) {
  const auto& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> y({c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += A.at(i, j);
  for (auto& v : y.data()) v /= static_cast<T>(r);
  return push(std::move(y), [a, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    const T w = T{1} / static_cast<T>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += d[j] * w;
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::sum(Var a) {
  T total = 0;
  for (auto v : node(a).value.data()) total += v;
  return push(Tensor<T>::scalar(total), [a](Graph& g, std::uint32_t self) {
    const T d = g.nodes_[self].grad[0];
    for (auto& v : g.grad_buf(a.id)) v += d;
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::weighted_sum(Var a, std::vector<T> weights) {
  const auto& A = node(a).value;
  require(weights.size() == A.size(), "weighted_sum: " + std::to_string(weights.size()) +
                                          " weights for tensor " + shape_string(A.shape()));
  T total = 0;
  for (std::size_t i = 0; i < A.size(); ++i) total += weights[i] * A[i];
  return push(Tensor<T>::scalar(total), [a, w = std::move(weights)](Graph& g, std::uint32_t self) {
    const T d = g.nodes_[self].grad[0];
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += d * w[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::squared_l2(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  require(A.size() == B.size(), "squared_l2: lengths differ: " + shape_string(A.shape()) + " vs " +
                                    shape_string(B.shape()));
  T total = 0;
  for (std::size_t i = 0; i < A.size(); ++i) total += (A[i] - B[i]) * (A[i] - B[i]);
  return push(Tensor<T>::scalar(total), [a, b](Graph& g, std::uint32_t self) {
    const T d = g.nodes_[self].grad[0];
    const auto& Av = g.nodes_[a.id].value;
    const auto& Bv = g.nodes_[b.id].value;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += 2 * d * (Av[i] - Bv[i]);
    auto& db = g.grad_buf(b.id);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= 2 * d * (Av[i] - Bv[i]);
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::pairwise_sq_dist(Var a, Var b) {
  const auto& A = node(a).value;
  const auto& B = node(b).value;
  const std::size_t m = A.rows(), n = B.rows(), c = A.cols();
  require(B.cols() == c, "pairwise_sq_dist: widths differ: " + shape_string(A.shape()) + " vs " +
                             shape_string(B.shape()));
  Tensor<T> D({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const T diff = A.at(i, k) - B.at(j, k);
        acc += diff * diff;
      }
      D.at(i, j) = acc;
    }
  }
  return push(std::move(D), [a, b, m, n, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    const auto& Av = g.nodes_[a.id].value;
    const auto& Bv = g.nodes_[b.id].value;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T w = 2 * d[i * n + j];
        if (w == T{0}) continue;
        // Re-fetch buffers each time: a and b may be the same node.
        auto& da = g.grad_buf(a.id);
        for (std::size_t k = 0; k < c; ++k) da[i * c + k] += w * (Av.at(i, k) - Bv.at(j, k));
        auto& db = g.grad_buf(b.id);
        for (std::size_t k = 0; k < c; ++k) db[j * c + k] -= w * (Av.at(i, k) - Bv.at(j, k));
      }
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const std::size_t c = node(parts[0]).value.cols();
  std::size_t r = 0;
  for (auto p : parts) {
    require(node(p).value.cols() == c, "concat_rows: width " + std::to_string(node(p).value.cols()) +
                                           " differs from " + std::to_string(c));
    r += node(p).value.rows();
  }
  Tensor<T> out({r, c});
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& v = node(p).value;
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(out), [ins = std::move(ins)](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    std::size_t off = 0;
    for (auto p : ins) {
      auto& dp = g.grad_buf(p.id);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += d[off + i];
      off += dp.size();
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t r = node(parts[0]).value.rows();
  std::size_t c = 0;
  for (auto p : parts) {
    require(node(p).value.rows() == r, "concat_cols: height " + std::to_string(node(p).value.rows()) +
                                           " differs from " + std::to_string(r));
    c += node(p).value.cols();
  }
  Tensor<T> out({r, c});
  std::size_t col = 0;
  for (auto p : parts) {
    const auto& v = node(p).value;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, col + j) = v.at(i, j);
    col += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(out), [ins = std::move(ins), r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    std::size_t col = 0;
    for (auto p : ins) {
      const std::size_t w = g.nodes_[p.id].value.cols();
      auto& dp = g.grad_buf(p.id);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) dp[i * w + j] += d[i * c + col + j];
      col += w;
    }
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const auto& A = node(a).value;
  const std::size_t c = A.cols();
  require(count >= 1 && begin + count <= A.rows(),
          "slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of range for " + shape_string(A.shape()));
  std::vector<T> v(A.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                   A.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return push(Tensor<T>({count, c}, std::move(v)), [a, begin, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) da[begin * c + i] += d[i];
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const auto& A = node(a).value;
  const std::size_t r = A.rows(), c = A.cols();
  require(count >= 1 && begin + count <= c,
          "slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of range for " + shape_string(A.shape()));
  Tensor<T> out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = A.at(i, begin + j);
  return push(std::move(out), [a, begin, count, r, c](Graph& g, std::uint32_t self) {
    const auto& d = g.nodes_[self].grad;
    auto& da = g.grad_buf(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) da[i * c + begin + j] += d[i * count + j];
  });
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (!recording_) throw UsageError("backward: graph was built without gradient recording");
  const auto& L = node(loss).value;
  if (L.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + shape_string(L.shape()));
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (i <= loss.id) {
      nodes_[i].grad.assign(nodes_[i].value.size(), T{0});
    } else {
      nodes_[i].grad.clear();
    }
  }
  nodes_[loss.id].grad[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (!n.source) continue;
    auto dst = n.source->grad();
    if (n.grad.empty()) continue;  // created after the loss node
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace protox
