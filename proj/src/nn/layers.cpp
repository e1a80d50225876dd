#include "recurrdrive/nn/layers.hpp"

#include <Eigen/Core>
#include <stdexcept>

namespace rdn::nn {

namespace {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;
template <typename T>
using ConstRowVec = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

template <typename T>
Parameter<T>::Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void Parameter<T>::zero_grad() {
  std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void init_uniform(Parameter<T>& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : p.value) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  require(in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0, "conv2d: invalid configuration");
}

template <typename T>
ConvShape Conv2d<T>::output_shape(int height, int width) const {
  require(height >= kernel_ && width >= kernel_, "conv2d: input smaller than kernel");
  return {out_channels_, (height - kernel_) / stride_ + 1, (width - kernel_) / stride_ + 1};
}

template <typename T>
void Conv2d<T>::im2col(const T* image, int height, int width, int out_h, int out_w, T* cols) const {
  const int k = kernel_;
  const int positions = out_h * out_w;
  for (int c = 0; c < in_channels_; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * positions;
        for (int oy = 0; oy < out_h; ++oy) {
          const T* src = plane + static_cast<std::size_t>(oy * stride_ + ky) * width + kx;
          T* dst = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) dst[ox] = src[ox * stride_];
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, int height, int width, int out_h, int out_w, T* image) const {
  const int k = kernel_;
  const int positions = out_h * out_w;
  for (int c = 0; c < in_channels_; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * positions;
        for (int oy = 0; oy < out_h; ++oy) {
          T* dst = plane + static_cast<std::size_t>(oy * stride_ + ky) * width + kx;
          const T* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) dst[ox * stride_] += src[ox];
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::forward(std::span<const T> input, int batch, int height, int width, std::span<T> output) const {
  const ConvShape out = output_shape(height, width);
  const std::size_t in_size = static_cast<std::size_t>(in_channels_) * height * width;
  require(input.size() == in_size * batch, "conv2d: input size mismatch");
  require(output.size() == out.numel() * batch, "conv2d: output size mismatch");
  const int rows = in_channels_ * kernel_ * kernel_;
  const int positions = out.height * out.width;
  std::vector<T> cols(static_cast<std::size_t>(rows) * positions);
  ConstMapRM<T> w(weight.value.data(), out_channels_, rows);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value.data(), out_channels_);
  for (int n = 0; n < batch; ++n) {
    im2col(input.data() + in_size * n, height, width, out.height, out.width, cols.data());
    MapRM<T> y(output.data() + out.numel() * n, out_channels_, positions);
    y.noalias() = w * ConstMapRM<T>(cols.data(), rows, positions);
    y.colwise() += b;
  }
}

template <typename T>
void Conv2d<T>::backward(std::span<const T> input, int batch, int height, int width, std::span<const T> grad_output,
                         std::span<T> grad_input) {
  const ConvShape out = output_shape(height, width);
  const std::size_t in_size = static_cast<std::size_t>(in_channels_) * height * width;
  require(input.size() == in_size * batch, "conv2d: input size mismatch");
  require(grad_output.size() == out.numel() * batch, "conv2d: grad_output size mismatch");
  require(grad_input.empty() || grad_input.size() == input.size(), "conv2d: grad_input size mismatch");
  const int rows = in_channels_ * kernel_ * kernel_;
  const int positions = out.height * out.width;
  std::vector<T> cols(static_cast<std::size_t>(rows) * positions);
  std::vector<T> dcols(grad_input.empty() ? 0 : cols.size());
  ConstMapRM<T> w(weight.value.data(), out_channels_, rows);
  MapRM<T> dw(weight.grad.data(), out_channels_, rows);
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), T(0));
  for (int n = 0; n < batch; ++n) {
    im2col(input.data() + in_size * n, height, width, out.height, out.width, cols.data());
    ConstMapRM<T> dy(grad_output.data() + out.numel() * n, out_channels_, positions);
    dw.noalias() += dy * ConstMapRM<T>(cols.data(), rows, positions).transpose();
    const T* g = grad_output.data() + out.numel() * n;
    for (int o = 0; o < out_channels_; ++o) {
      T sum = 0;
      for (int p = 0; p < positions; ++p) sum += g[static_cast<std::size_t>(o) * positions + p];
      bias.grad[static_cast<std::size_t>(o)] += sum;
    }
    if (!grad_input.empty()) {
      MapRM<T>(dcols.data(), rows, positions).noalias() = w.transpose() * dy;
      col2im(dcols.data(), height, width, out.height, out.width, grad_input.data() + in_size * n);
    }
  }
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {
  require(in_features > 0 && out_features > 0, "linear: invalid configuration");
}

template <typename T>
void Linear<T>::forward(std::span<const T> input, int batch, std::span<T> output) const {
  require(input.size() == static_cast<std::size_t>(batch) * in_, "linear: input size mismatch");
  require(output.size() == static_cast<std::size_t>(batch) * out_, "linear: output size mismatch");
  ConstMapRM<T> x(input.data(), batch, in_);
  MapRM<T> y(output.data(), batch, out_);
  y.noalias() = x * ConstMapRM<T>(weight.value.data(), out_, in_).transpose();
  y.rowwise() += ConstRowVec<T>(bias.value.data(), out_);
}

template <typename T>
void Linear<T>::backward(std::span<const T> input, int batch, std::span<const T> grad_output, std::span<T> grad_input) {
  require(input.size() == static_cast<std::size_t>(batch) * in_, "linear: input size mismatch");
  require(grad_output.size() == static_cast<std::size_t>(batch) * out_, "linear: grad_output size mismatch");
  ConstMapRM<T> x(input.data(), batch, in_);
  ConstMapRM<T> dy(grad_output.data(), batch, out_);
  MapRM<T>(weight.grad.data(), out_, in_).noalias() += dy.transpose() * x;
  add_column_sums(grad_output.data(), batch, out_, bias.grad.data());
  if (!grad_input.empty()) {
    require(grad_input.size() == input.size(), "linear: grad_input size mismatch");
    MapRM<T>(grad_input.data(), batch, in_).noalias() = dy * ConstMapRM<T>(weight.value.data(), out_, in_);
  }
}

template <typename T>
void relu_inplace(std::span<T> x) {
  for (T& v : x) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward(std::span<const T> output, std::span<T> grad) {
  require(output.size() == grad.size(), "relu: size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > T(0))) grad[i] = T(0);
  }
}

#define RDN_INSTANTIATE(T)                                                   \
  template struct Parameter<T>;                                              \
  template void init_uniform<T>(Parameter<T>&, double, std::mt19937_64&);    \
  template class Conv2d<T>;                                                  \
  template class Linear<T>;                                                  \
  template void relu_inplace<T>(std::span<T>);                               \
  template void relu_backward<T>(std::span<const T>, std::span<T>);

RDN_INSTANTIATE(float)
RDN_INSTANTIATE(double)
#undef RDN_INSTANTIATE

}  // namespace rdn::nn
