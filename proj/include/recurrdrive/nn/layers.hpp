#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rdn::nn {

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

// U(-bound, bound) initialisation.
template <typename T>
void init_uniform(Parameter<T>& p, double bound, std::mt19937_64& rng);

struct ConvShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t numel() const { return static_cast<std::size_t>(channels) * height * width; }
};

// Valid (no padding) 2-D convolution over a batch laid out N x C x H x W.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride);

  ConvShape output_shape(int height, int width) const;
  void forward(std::span<const T> input, int batch, int height, int width, std::span<T> output) const;
  // Accumulates weight/bias gradients. `grad_input` may be empty to skip the input gradient.
  void backward(std::span<const T> input, int batch, int height, int width, std::span<const T> grad_output,
                std::span<T> grad_input);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }

  Parameter<T> weight;  // out x (in * k * k)
  Parameter<T> bias;

 private:
  void im2col(const T* image, int height, int width, int out_h, int out_w, T* cols) const;
  void col2im(const T* cols, int height, int width, int out_h, int out_w, T* image) const;

  int in_channels_;
  int out_channels_;
  int kernel_;
  int stride_;
};

// y = W x + b over a batch of row vectors (N x in).
template <typename T>
class Linear {
 public:
  Linear(std::string name, int in_features, int out_features);

  void forward(std::span<const T> input, int batch, std::span<T> output) const;
  void backward(std::span<const T> input, int batch, std::span<const T> grad_output, std::span<T> grad_input);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Parameter<T> weight;  // out x in
  Parameter<T> bias;

 private:
  int in_;
  int out_;
};

template <typename T>
void relu_inplace(std::span<T> x);

// Zeroes grad where the forward output is not positive (subgradient 0 at x = 0).
template <typename T>
void relu_backward(std::span<const T> output, std::span<T> grad);

// out[j] += sum_i m[i * cols + j], rows summed in order. Eigen's vectorized reductions choose their
// split by buffer address, which would make gradients depend on where memory was allocated.
template <typename T>
void add_column_sums(const T* m, int rows, int cols, T* out) {
  for (int j = 0; j < cols; ++j) {
    T sum = 0;
    for (int i = 0; i < rows; ++i) sum += m[static_cast<std::size_t>(i) * cols + j];
    out[j] += sum;
  }
}

}  // namespace rdn::nn
