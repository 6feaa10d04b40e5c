#include "touchadd/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace touchadd::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

Mat& g(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }
bool wants(Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul");
  Mat out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    const Mat& A = self.inputs[0]->value;
    const Mat& B = self.inputs[1]->value;
    if (wants(self, 0)) g(self, 0).noalias() += self.grad * B.transpose();
    if (wants(self, 1)) g(self, 1).noalias() += A.transpose() * self.grad;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear");
  Mat out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return Tensor::from_op(std::move(out), {x, w, b}, [](Node& self) {
    const Mat& X = self.inputs[0]->value;
    const Mat& W = self.inputs[1]->value;
    if (wants(self, 0)) g(self, 0).noalias() += self.grad * W.transpose();
    if (wants(self, 1)) g(self, 1).noalias() += X.transpose() * self.grad;
    if (wants(self, 2)) g(self, 2) += self.grad.colwise().sum();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  return Tensor::from_op(a.value() + b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) g(self, 0) += self.grad;
    if (wants(self, 1)) g(self, 1) += self.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  return Tensor::from_op(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) g(self, 0) += self.grad;
    if (wants(self, 1)) g(self, 1) -= self.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  Mat out = a.value().cwiseProduct(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) g(self, 0) += self.grad.cwiseProduct(self.inputs[1]->value);
    if (wants(self, 1)) g(self, 1) += self.grad.cwiseProduct(self.inputs[0]->value);
  });
}

Tensor scale(const Tensor& a, Real s) {
  return Tensor::from_op(a.value() * s, {a}, [s](Node& self) { g(self, 0) += self.grad * s; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return Tensor::from_op(std::move(out), {a, row}, [](Node& self) {
    if (wants(self, 0)) g(self, 0) += self.grad;
    if (wants(self, 1)) g(self, 1) += self.grad.colwise().sum();
  });
}

Tensor add_col(const Tensor& a, const Tensor& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "add_col");
  Mat out = a.value();
  out.colwise() += col.value().col(0);
  return Tensor::from_op(std::move(out), {a, col}, [](Node& self) {
    if (wants(self, 0)) g(self, 0) += self.grad;
    if (wants(self, 1)) g(self, 1) += self.grad.rowwise().sum();
  });
}

Tensor relu(const Tensor& x) {
  Mat out = x.value().cwiseMax(0.0);
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    g(self, 0) += (self.inputs[0]->value.array() > 0.0).cast<Real>().matrix().cwiseProduct(self.grad);
  });
}

constexpr Real kGeluA = 0.7978845608028654;  // sqrt(2 / pi)
constexpr Real kGeluB = 0.044715;

Tensor gelu(const Tensor& x) {
  const auto X = x.value().array();
  Mat out = (0.5 * X * (1.0 + (kGeluA * (X + kGeluB * X.cube())).tanh())).matrix();
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    const auto X = self.inputs[0]->value.array();
    const Eigen::ArrayXXd t = (kGeluA * (X + kGeluB * X.cube())).tanh();
    const Eigen::ArrayXXd d =
        0.5 * (1.0 + t) + 0.5 * X * (1.0 - t.square()) * kGeluA * (1.0 + 3.0 * kGeluB * X.square());
    g(self, 0).array() += d * self.grad.array();
  });
}

Tensor silu(const Tensor& x) {
  const auto X = x.value().array();
  Mat out = (X / (1.0 + (-X).exp())).matrix();
  return Tensor::from_op(std::move(out), {x}, [](Node& self) {
    const auto X = self.inputs[0]->value.array();
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-X).exp());
    g(self, 0).array() += (s * (1.0 + X * (1.0 - s))) * self.grad.array();
  });
}

Tensor sigmoid(const Tensor& x) {
  Mat out = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
  return Tensor::from_op(out, {x}, [out](Node& self) {
    g(self, 0).array() += out.array() * (1.0 - out.array()) * self.grad.array();
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.cols() == x.cols(), "layer_norm");
  const Index n = x.rows(), d = x.cols();
  Mat xhat(n, d);
  Eigen::Matrix<Real, Eigen::Dynamic, 1> inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const auto row = x.value().row(r);
    const Real mu = row.mean();
    const Real var = (row.array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mu) * inv_std(r);
  }
  Mat out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return Tensor::from_op(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Mat& G = self.inputs[1]->value;
    const Mat& dy = self.grad;
    if (wants(self, 0)) {
      Mat& dx = g(self, 0);
      for (Index r = 0; r < dy.rows(); ++r) {
        const Eigen::Array<Real, 1, Eigen::Dynamic> dxh = dy.row(r).array() * G.row(0).array();
        const Real m1 = dxh.mean();
        const Real m2 = (dxh * xhat.row(r).array()).mean();
        dx.row(r).array() += inv_std(r) * (dxh - m1 - xhat.row(r).array() * m2);
      }
    }
    if (wants(self, 1)) g(self, 1) += dy.cwiseProduct(xhat).colwise().sum();
    if (wants(self, 2)) g(self, 2) += dy.colwise().sum();
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  Mat out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("embedding id out of range");
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Tensor::from_op(std::move(out), {table}, [idx](Node& self) {
    Mat& gt = g(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Tensor embedding_bag(const Tensor& table, std::span<const int> ids) {
  Mat out = Mat::Zero(1, table.cols());
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) throw std::out_of_range("embedding id out of range");
    out.row(0) += table.value().row(id);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Tensor::from_op(std::move(out), {table}, [idx](Node& self) {
    Mat& gt = g(self, 0);
    for (int id : idx) gt.row(id) += self.grad.row(0);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return Tensor::from_op(std::move(out), parts, [](Node& self) {
    Index r = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const Index n = self.inputs[i]->value.rows();
      if (wants(self, i)) g(self, i) += self.grad.middleRows(r, n);
      r += n;
    }
  });
}

Tensor slice_rows(const Tensor& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw std::out_of_range("slice_rows");
  Mat out = x.value().middleRows(begin, count);
  return Tensor::from_op(std::move(out), {x}, [begin, count](Node& self) {
    g(self, 0).middleRows(begin, count) += self.grad;
  });
}

Tensor transpose(const Tensor& x) {
  Mat out = x.value().transpose();
  return Tensor::from_op(std::move(out), {x}, [](Node& self) { g(self, 0) += self.grad.transpose(); });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const Index L = q.rows(), d = q.cols();
  require(k.rows() == L && v.rows() == L && k.cols() == d && v.cols() == d && heads > 0 &&
              d % heads == 0,
          "causal_attention");
  const Index dh = d / heads;
  const Real sc = 1.0 / std::sqrt(static_cast<Real>(dh));
  auto probs = std::make_shared<std::vector<Mat>>(heads);
  Mat out(L, d);
  for (int h = 0; h < heads; ++h) {
    Mat s = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    s *= sc;
    for (Index i = 0; i < L; ++i) {
      const Real m = s.row(i).head(i + 1).maxCoeff();
      s.row(i).head(i + 1) = (s.row(i).head(i + 1).array() - m).exp();
      const Real z = s.row(i).head(i + 1).sum();
      s.row(i).head(i + 1) /= z;
      s.row(i).tail(L - i - 1).setZero();
    }
    out.middleCols(h * dh, dh).noalias() = s * v.value().middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  return Tensor::from_op(std::move(out), {q, k, v}, [probs, heads, dh, sc](Node& self) {
    const Mat& Q = self.inputs[0]->value;
    const Mat& K = self.inputs[1]->value;
    const Mat& V = self.inputs[2]->value;
    for (int h = 0; h < heads; ++h) {
      const Mat& P = (*probs)[h];
      const auto dO = self.grad.middleCols(h * dh, dh);
      if (wants(self, 2)) g(self, 2).middleCols(h * dh, dh).noalias() += P.transpose() * dO;
      Mat dP = dO * V.middleCols(h * dh, dh).transpose();
      // softmax backward, rows restricted to the causal prefix (P is zero elsewhere)
      const Eigen::Matrix<Real, Eigen::Dynamic, 1> dot = (dP.cwiseProduct(P)).rowwise().sum();
      Mat dS = P.cwiseProduct(dP.colwise() - dot) * sc;
      if (wants(self, 0)) g(self, 0).middleCols(h * dh, dh).noalias() += dS * K.middleCols(h * dh, dh);
      if (wants(self, 1)) g(self, 1).middleCols(h * dh, dh).noalias() += dS.transpose() * Q.middleCols(h * dh, dh);
    }
  });
}

namespace {

Mat im2col3x3(const Mat& x, int H, int W) {
  const Index C = x.rows();
  Mat cols = Mat::Zero(C * 9, static_cast<Index>(H) * W);
  for (Index c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(W, W + 1 - kx);
          for (int xx = x0; xx < x1; ++xx) cols(row, y * W + xx) = x(c, sy * W + xx + kx - 1);
        }
      }
    }
  }
  return cols;
}

void col2im3x3_add(const Mat& cols, Mat& dx, int H, int W) {
  const Index C = dx.rows();
  for (Index c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const int x0 = std::max(0, 1 - kx);
          const int x1 = std::min(W, W + 1 - kx);
          for (int xx = x0; xx < x1; ++xx) dx(c, sy * W + xx + kx - 1) += cols(row, y * W + xx);
        }
      }
    }
  }
}

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int height, int width) {
  require(x.cols() == static_cast<Index>(height) * width && weight.cols() == x.rows() * 9 &&
              bias.rows() == weight.rows() && bias.cols() == 1,
          "conv3x3");
  auto cols = std::make_shared<Mat>(im2col3x3(x.value(), height, width));
  Mat out = weight.value() * (*cols);
  out.colwise() += bias.value().col(0);
  return Tensor::from_op(std::move(out), {x, weight, bias}, [cols, height, width](Node& self) {
    const Mat& Wt = self.inputs[1]->value;
    if (wants(self, 1)) g(self, 1).noalias() += self.grad * cols->transpose();
    if (wants(self, 2)) g(self, 2) += self.grad.rowwise().sum();
    if (wants(self, 0)) {
      Mat dcols = Wt.transpose() * self.grad;
      col2im3x3_add(dcols, g(self, 0), height, width);
    }
  });
}

Tensor avg_pool2(const Tensor& x, int height, int width) {
  require(x.cols() == static_cast<Index>(height) * width && height % 2 == 0 && width % 2 == 0,
          "avg_pool2");
  const int h2 = height / 2, w2 = width / 2;
  Mat out(x.rows(), static_cast<Index>(h2) * w2);
  const Mat& X = x.value();
  for (Index c = 0; c < X.rows(); ++c)
    for (int y = 0; y < h2; ++y)
      for (int xx = 0; xx < w2; ++xx) {
        const Index a = (2 * y) * width + 2 * xx;
        out(c, y * w2 + xx) = 0.25 * (X(c, a) + X(c, a + 1) + X(c, a + width) + X(c, a + width + 1));
      }
  return Tensor::from_op(std::move(out), {x}, [width, h2, w2](Node& self) {
    Mat& dx = g(self, 0);
    for (Index c = 0; c < dx.rows(); ++c)
      for (int y = 0; y < h2; ++y)
        for (int xx = 0; xx < w2; ++xx) {
          const Real v = 0.25 * self.grad(c, y * w2 + xx);
          const Index a = (2 * y) * width + 2 * xx;
          dx(c, a) += v;
          dx(c, a + 1) += v;
          dx(c, a + width) += v;
          dx(c, a + width + 1) += v;
        }
  });
}

Tensor upsample2(const Tensor& x, int height, int width) {
  require(x.cols() == static_cast<Index>(height) * width, "upsample2");
  const int H2 = height * 2, W2 = width * 2;
  Mat out(x.rows(), static_cast<Index>(H2) * W2);
  const Mat& X = x.value();
  for (Index c = 0; c < X.rows(); ++c)
    for (int y = 0; y < H2; ++y)
      for (int xx = 0; xx < W2; ++xx) out(c, y * W2 + xx) = X(c, (y / 2) * width + xx / 2);
  return Tensor::from_op(std::move(out), {x}, [width, H2, W2](Node& self) {
    Mat& dx = g(self, 0);
    for (Index c = 0; c < dx.rows(); ++c)
      for (int y = 0; y < H2; ++y)
        for (int xx = 0; xx < W2; ++xx) dx(c, (y / 2) * width + xx / 2) += self.grad(c, y * W2 + xx);
  });
}

Tensor sum(const Tensor& x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return Tensor::from_op(std::move(out), {x}, [](Node& self) { g(self, 0).array() += self.grad(0, 0); });
}

Tensor mean(const Tensor& x) {
  const Real n = static_cast<Real>(x.value().size());
  Mat out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return Tensor::from_op(std::move(out), {x}, [n](Node& self) { g(self, 0).array() += self.grad(0, 0) / n; });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require(static_cast<Index>(targets.size()) == logits.rows() && !targets.empty(), "cross_entropy");
  const Index n = logits.rows();
  Mat probs(n, logits.cols());
  Real total = 0.0;
  for (Index r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols()) throw std::out_of_range("cross_entropy target out of range");
    const auto row = logits.value().row(r);
    const Real m = row.maxCoeff();
    probs.row(r) = (row.array() - m).exp();
    const Real z = probs.row(r).sum();
    probs.row(r) /= z;
    total += (m + std::log(z)) - row(t);
  }
  Mat out(1, 1);
  out(0, 0) = total / static_cast<Real>(n);
  std::vector<int> tg(targets.begin(), targets.end());
  return Tensor::from_op(std::move(out), {logits}, [probs = std::move(probs), tg](Node& self) {
    const Real s = self.grad(0, 0) / static_cast<Real>(tg.size());
    Mat& d = g(self, 0);
    d += probs * s;
    for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Index>(r), tg[r]) -= s;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mse");
  const Real n = static_cast<Real>(a.value().size());
  Mat diff = a.value() - b.value();
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return Tensor::from_op(std::move(out), {a, b}, [diff = std::move(diff), n](Node& self) {
    const Real s = 2.0 * self.grad(0, 0) / n;
    if (wants(self, 0)) g(self, 0) += diff * s;
    if (wants(self, 1)) g(self, 1) -= diff * s;
  });
}

Tensor dice_loss(const Tensor& probs, const Mat& target, Real eps) {
  require(probs.rows() == target.rows() && probs.cols() == target.cols(), "dice_loss");
  const Real inter = probs.value().cwiseProduct(target).sum();
  const Real denom = probs.value().sum() + target.sum() + eps;
  const Real numer = 2.0 * inter + eps;
  Mat out(1, 1);
  out(0, 0) = 1.0 - numer / denom;
  return Tensor::from_op(std::move(out), {probs}, [target, numer, denom](Node& self) {
    const Real s = self.grad(0, 0);
    g(self, 0).array() += s * (numer - 2.0 * target.array() * denom) / (denom * denom);
  });
}

}  // namespace touchadd::nn
