#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "qxq/tensor.hpp"

namespace qxq {

namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::span<float> grad_of(const Tensor& t) { return const_cast<Tensor&>(t).grad(); }

// col buffer layout: (Cin*k*k) x (Hout*Wout), one sample at a time.
void im2col(const float* x, int cin, int h, int w, int k, int stride, int pad, int hout, int wout,
            float* col) {
  for (int c = 0; c < cin; ++c) {
    const float* src = x + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * hout * wout;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst + static_cast<size_t>(oy) * wout, wout, 0.0f);
            continue;
          }
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride + kx - pad;
            dst[static_cast<size_t>(oy) * wout + ox] =
                (ix >= 0 && ix < w) ? src[static_cast<size_t>(iy) * w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_accumulate(const float* col, int cin, int h, int w, int k, int stride, int pad,
                       int hout, int wout, float* x) {
  for (int c = 0; c < cin; ++c) {
    float* dst = x + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * hout * wout;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[static_cast<size_t>(iy) * w + ix] += src[static_cast<size_t>(oy) * wout + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) fail(ErrorKind::Shape, "conv2d expects square kernels, got " + ws.str());
  const int k = ws.h;
  if (ws.c != xs.c)
    fail(ErrorKind::Shape, "conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
                               " channels but kernel " + ws.str() + " expects " +
                               std::to_string(ws.c));
  if (stride < 1 || padding < 0) fail(ErrorKind::Parameter, "conv2d: bad stride/padding");
  if (xs.h + 2 * padding < k || xs.w + 2 * padding < k)
    fail(ErrorKind::Shape, "conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                               xs.str());
  const int cout = ws.n, cin = xs.c;
  const int hout = (xs.h + 2 * padding - k) / stride + 1;
  const int wout = (xs.w + 2 * padding - k) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && !(bias.shape() == Shape{1, cout, 1, 1}))
    fail(ErrorKind::Shape, "conv2d: bias must be (1," + std::to_string(cout) + ",1,1), got " +
                               bias.shape().str());

  Shape out_shape{xs.n, cout, hout, wout};
  std::vector<float> out(out_shape.numel());
  std::vector<float> col(static_cast<size_t>(cin) * k * k * hout * wout);
  Eigen::Map<const MatrixRM> wmat(weight.data().data(), cout, static_cast<Eigen::Index>(cin) * k * k);
  const size_t x_sample = static_cast<size_t>(cin) * xs.h * xs.w;
  const size_t out_sample = static_cast<size_t>(cout) * hout * wout;

  for (int n = 0; n < xs.n; ++n) {
    im2col(x.data().data() + n * x_sample, cin, xs.h, xs.w, k, stride, padding, hout, wout,
           col.data());
    Eigen::Map<const MatrixRM> cmat(col.data(), static_cast<Eigen::Index>(cin) * k * k,
                                    static_cast<Eigen::Index>(hout) * wout);
    Eigen::Map<MatrixRM> omat(out.data() + n * out_sample, cout,
                              static_cast<Eigen::Index>(hout) * wout);
    omat.noalias() = wmat * cmat;
  }
  if (has_bias) {
    auto bv = bias.data();
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < cout; ++c) {
        float* dst = out.data() + n * out_sample + static_cast<size_t>(c) * hout * wout;
        for (int i = 0; i < hout * wout; ++i) dst[i] += bv[c];
      }
  }

  std::vector<Tensor> parents = {x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_op(
      out_shape, std::move(out), std::move(parents),
      [x, weight, bias, has_bias, k, stride, padding, hout, wout](const Tensor& self) {
        const Shape& xs = x.shape();
        const int cout = weight.shape().n, cin = xs.c;
        auto g = self.grad();
        const size_t x_sample = static_cast<size_t>(cin) * xs.h * xs.w;
        const size_t out_sample = static_cast<size_t>(cout) * hout * wout;
        std::vector<float> col(static_cast<size_t>(cin) * k * k * hout * wout);
        Eigen::Map<const MatrixRM> wmat(weight.data().data(), cout,
                                        static_cast<Eigen::Index>(cin) * k * k);

        if (weight.requires_grad() || x.requires_grad()) {
          for (int n = 0; n < xs.n; ++n) {
            Eigen::Map<const MatrixRM> gout(g.data() + n * out_sample, cout,
                                            static_cast<Eigen::Index>(hout) * wout);
            if (weight.requires_grad()) {
              im2col(x.data().data() + n * x_sample, cin, xs.h, xs.w, k, stride, padding, hout,
                     wout, col.data());
              Eigen::Map<const MatrixRM> cmat(col.data(), static_cast<Eigen::Index>(cin) * k * k,
                                              static_cast<Eigen::Index>(hout) * wout);
              Eigen::Map<MatrixRM> gw(grad_of(weight).data(), cout,
                                      static_cast<Eigen::Index>(cin) * k * k);
              gw.noalias() += gout * cmat.transpose();
            }
            if (x.requires_grad()) {
              Eigen::Map<MatrixRM> cgrad(col.data(), static_cast<Eigen::Index>(cin) * k * k,
                                         static_cast<Eigen::Index>(hout) * wout);
              cgrad.noalias() = wmat.transpose() * gout;
              col2im_accumulate(col.data(), cin, xs.h, xs.w, k, stride, padding, hout, wout,
                                grad_of(x).data() + n * x_sample);
            }
          }
        }
        if (has_bias && bias.requires_grad()) {
          auto gb = grad_of(bias);
          for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < cout; ++c) {
              const float* src = g.data() + n * out_sample + static_cast<size_t>(c) * hout * wout;
              double sum = 0.0;
              for (int i = 0; i < hout * wout; ++i) sum += src[i];
              gb[c] += static_cast<float>(sum);
            }
        }
      });
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (s.c % (r * r) != 0)
    fail(ErrorKind::Shape, "pixel_shuffle: channels " + std::to_string(s.c) +
                               " not divisible by r^2 = " + std::to_string(r * r));
  Shape out_shape{s.n, s.c / (r * r), s.h * r, s.w * r};
  std::vector<float> out(out_shape.numel());
  auto dx = x.data();
  const int co = out_shape.c;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < co; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j)
          for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
              size_t src = ((static_cast<size_t>(n) * s.c + (c * r * r + a * r + b)) * s.h + i) * s.w + j;
              size_t dst = ((static_cast<size_t>(n) * co + c) * out_shape.h + (i * r + a)) * out_shape.w +
                           (j * r + b);
              out[dst] = dx[src];
            }
  return Tensor::make_op(out_shape, std::move(out), {x}, [x, r, co](const Tensor& self) {
    const Shape& s = x.shape();
    auto g = self.grad();
    auto gx = grad_of(x);
    const Shape& os = self.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < co; ++c)
        for (int i = 0; i < s.h; ++i)
          for (int j = 0; j < s.w; ++j)
            for (int a = 0; a < r; ++a)
              for (int b = 0; b < r; ++b) {
                size_t src = ((static_cast<size_t>(n) * s.c + (c * r * r + a * r + b)) * s.h + i) * s.w + j;
                size_t dst = ((static_cast<size_t>(n) * co + c) * os.h + (i * r + a)) * os.w + (j * r + b);
                gx[src] += g[dst];
              }
  });
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  const Shape& s = x.shape();
  if (s.h % r != 0 || s.w % r != 0)
    fail(ErrorKind::Geometry,
         "pixel_unshuffle: spatial size " + s.str() + " not divisible by " + std::to_string(r));
  Shape out_shape{s.n, s.c * r * r, s.h / r, s.w / r};
  std::vector<float> out(out_shape.numel());
  auto dx = x.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < out_shape.h; ++i)
        for (int j = 0; j < out_shape.w; ++j)
          for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
              size_t src = ((static_cast<size_t>(n) * s.c + c) * s.h + (i * r + a)) * s.w + (j * r + b);
              size_t dst = ((static_cast<size_t>(n) * out_shape.c + (c * r * r + a * r + b)) * out_shape.h + i) *
                               out_shape.w + j;
              out[dst] = dx[src];
            }
  return Tensor::make_op(out_shape, std::move(out), {x}, [x, r](const Tensor& self) {
    const Shape& s = x.shape();
    const Shape& os = self.shape();
    auto g = self.grad();
    auto gx = grad_of(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < os.h; ++i)
          for (int j = 0; j < os.w; ++j)
            for (int a = 0; a < r; ++a)
              for (int b = 0; b < r; ++b) {
                size_t src = ((static_cast<size_t>(n) * s.c + c) * s.h + (i * r + a)) * s.w + (j * r + b);
                size_t dst = ((static_cast<size_t>(n) * os.c + (c * r * r + a * r + b)) * os.h + i) * os.w + j;
                gx[src] += g[dst];
              }
  });
}

Tensor avg_pool2(const Tensor& x) {
  const Shape& s = x.shape();
  Shape out_shape{s.n, s.c, s.h / 2, s.w / 2};
  if (out_shape.h == 0 || out_shape.w == 0)
    fail(ErrorKind::Shape, "avg_pool2: input " + s.str() + " too small");
  std::vector<float> out(out_shape.numel());
  auto dx = x.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = dx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
      float* dst = out.data() + (static_cast<size_t>(n) * s.c + c) * out_shape.h * out_shape.w;
      for (int i = 0; i < out_shape.h; ++i)
        for (int j = 0; j < out_shape.w; ++j)
          dst[static_cast<size_t>(i) * out_shape.w + j] =
              0.25f * (src[(2 * i) * static_cast<size_t>(s.w) + 2 * j] +
                       src[(2 * i) * static_cast<size_t>(s.w) + 2 * j + 1] +
                       src[(2 * i + 1) * static_cast<size_t>(s.w) + 2 * j] +
                       src[(2 * i + 1) * static_cast<size_t>(s.w) + 2 * j + 1]);
    }
  return Tensor::make_op(out_shape, std::move(out), {x}, [x](const Tensor& self) {
    const Shape& s = x.shape();
    const Shape& os = self.shape();
    auto g = self.grad();
    auto gx = grad_of(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        float* dst = gx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
        const float* src = g.data() + (static_cast<size_t>(n) * s.c + c) * os.h * os.w;
        for (int i = 0; i < os.h; ++i)
          for (int j = 0; j < os.w; ++j) {
            float v = 0.25f * src[static_cast<size_t>(i) * os.w + j];
            dst[(2 * i) * static_cast<size_t>(s.w) + 2 * j] += v;
            dst[(2 * i) * static_cast<size_t>(s.w) + 2 * j + 1] += v;
            dst[(2 * i + 1) * static_cast<size_t>(s.w) + 2 * j] += v;
            dst[(2 * i + 1) * static_cast<size_t>(s.w) + 2 * j + 1] += v;
          }
      }
  });
}

namespace {

struct LerpTap {
  int lo, hi;
  float t;
};

// align_corners = false: source coordinate of output index i is (i + 0.5)/2 - 0.5.
std::vector<LerpTap> upsample_taps(int out_len, int in_len) {
  std::vector<LerpTap> taps(out_len);
  for (int i = 0; i < out_len; ++i) {
    float src = (i + 0.5f) * 0.5f - 0.5f;
    src = std::clamp(src, 0.0f, static_cast<float>(in_len - 1));
    int lo = static_cast<int>(std::floor(src));
    int hi = std::min(lo + 1, in_len - 1);
    taps[i] = {lo, hi, src - static_cast<float>(lo)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample2x(const Tensor& x) {
  const Shape& s = x.shape();
  Shape out_shape{s.n, s.c, s.h * 2, s.w * 2};
  auto ty = upsample_taps(out_shape.h, s.h);
  auto tx = upsample_taps(out_shape.w, s.w);
  std::vector<float> out(out_shape.numel());
  auto dx = x.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = dx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
      float* dst = out.data() + (static_cast<size_t>(n) * s.c + c) * out_shape.h * out_shape.w;
      for (int i = 0; i < out_shape.h; ++i)
        for (int j = 0; j < out_shape.w; ++j) {
          const LerpTap& ay = ty[i];
          const LerpTap& ax = tx[j];
          float top = src[static_cast<size_t>(ay.lo) * s.w + ax.lo] * (1.0f - ax.t) +
                      src[static_cast<size_t>(ay.lo) * s.w + ax.hi] * ax.t;
          float bot = src[static_cast<size_t>(ay.hi) * s.w + ax.lo] * (1.0f - ax.t) +
                      src[static_cast<size_t>(ay.hi) * s.w + ax.hi] * ax.t;
          dst[static_cast<size_t>(i) * out_shape.w + j] = top * (1.0f - ay.t) + bot * ay.t;
        }
    }
  return Tensor::make_op(out_shape, std::move(out), {x}, [x, ty, tx](const Tensor& self) {
    const Shape& s = x.shape();
    const Shape& os = self.shape();
    auto g = self.grad();
    auto gx = grad_of(x);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        float* dst = gx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
        const float* src = g.data() + (static_cast<size_t>(n) * s.c + c) * os.h * os.w;
        for (int i = 0; i < os.h; ++i)
          for (int j = 0; j < os.w; ++j) {
            const LerpTap& ay = ty[i];
            const LerpTap& ax = tx[j];
            float gv = src[static_cast<size_t>(i) * os.w + j];
            dst[static_cast<size_t>(ay.lo) * s.w + ax.lo] += gv * (1.0f - ay.t) * (1.0f - ax.t);
            dst[static_cast<size_t>(ay.lo) * s.w + ax.hi] += gv * (1.0f - ay.t) * ax.t;
            dst[static_cast<size_t>(ay.hi) * s.w + ax.lo] += gv * ay.t * (1.0f - ax.t);
            dst[static_cast<size_t>(ay.hi) * s.w + ax.hi] += gv * ay.t * ax.t;
          }
      }
  });
}

Tensor blur_valid(const Tensor& x, const std::vector<float>& taps) {
  const Shape& s = x.shape();
  const int k = static_cast<int>(taps.size());
  if (s.h < k || s.w < k)
    fail(ErrorKind::Shape, "blur_valid: image " + s.str() + " smaller than the window " +
                               std::to_string(k));
  Shape out_shape{s.n, s.c, s.h - k + 1, s.w - k + 1};
  std::vector<float> out(out_shape.numel());
  std::vector<float> tmp(static_cast<size_t>(s.h) * out_shape.w);
  auto dx = x.data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = dx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
      // rows
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < out_shape.w; ++j) {
          double acc = 0.0;
          for (int t = 0; t < k; ++t) acc += static_cast<double>(src[static_cast<size_t>(i) * s.w + j + t]) * taps[t];
          tmp[static_cast<size_t>(i) * out_shape.w + j] = static_cast<float>(acc);
        }
      // columns
      float* dst = out.data() + (static_cast<size_t>(n) * s.c + c) * out_shape.h * out_shape.w;
      for (int i = 0; i < out_shape.h; ++i)
        for (int j = 0; j < out_shape.w; ++j) {
          double acc = 0.0;
          for (int t = 0; t < k; ++t) acc += static_cast<double>(tmp[static_cast<size_t>(i + t) * out_shape.w + j]) * taps[t];
          dst[static_cast<size_t>(i) * out_shape.w + j] = static_cast<float>(acc);
        }
    }
  return Tensor::make_op(out_shape, std::move(out), {x}, [x, taps, k](const Tensor& self) {
    const Shape& s = x.shape();
    const Shape& os = self.shape();
    auto g = self.grad();
    auto gx = grad_of(x);
    std::vector<float> tmp(static_cast<size_t>(s.h) * os.w);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* src = g.data() + (static_cast<size_t>(n) * s.c + c) * os.h * os.w;
        std::fill(tmp.begin(), tmp.end(), 0.0f);
        // scatter through the column pass, then the row pass
        for (int i = 0; i < os.h; ++i)
          for (int j = 0; j < os.w; ++j) {
            float gv = src[static_cast<size_t>(i) * os.w + j];
            for (int t = 0; t < k; ++t) tmp[static_cast<size_t>(i + t) * os.w + j] += gv * taps[t];
          }
        float* dst = gx.data() + (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
        for (int i = 0; i < s.h; ++i)
          for (int j = 0; j < os.w; ++j) {
            float gv = tmp[static_cast<size_t>(i) * os.w + j];
            for (int t = 0; t < k; ++t) dst[static_cast<size_t>(i) * s.w + j + t] += gv * taps[t];
          }
      }
  });
}

}  // namespace qxq
