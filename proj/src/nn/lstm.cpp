#include "recurrdrive/nn/lstm.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace rdn::nn {

namespace {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
LstmCell<T>::LstmCell(std::string name, int input_size, int hidden_size)
    : w_input(name + ".w_input", {4 * hidden_size, input_size}),
      w_hidden(name + ".w_hidden", {4 * hidden_size, hidden_size}),
      bias(name + ".bias", {4 * hidden_size}),
      input_(input_size),
      hidden_(hidden_size) {
  if (input_size <= 0 || hidden_size <= 0) throw std::invalid_argument("lstm: invalid configuration");
}

template <typename T>
void LstmCell<T>::step(std::span<const T> x, int batch, std::span<T> h, std::span<T> c, StepCache* cache) const {
  const int H = hidden_;
  if (x.size() != static_cast<std::size_t>(batch) * input_) throw std::invalid_argument("lstm: input size mismatch");
  if (h.size() != static_cast<std::size_t>(batch) * H || c.size() != h.size()) {
    throw std::invalid_argument("lstm: state size mismatch");
  }
  Eigen::Map<const MatrixRM<T>> xm(x.data(), batch, input_);
  Eigen::Map<const MatrixRM<T>> hm(h.data(), batch, H);
  MatrixRM<T> pre = xm * Eigen::Map<const MatrixRM<T>>(w_input.value.data(), 4 * H, input_).transpose();
  pre.noalias() += hm * Eigen::Map<const MatrixRM<T>>(w_hidden.value.data(), 4 * H, H).transpose();
  pre.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value.data(), 4 * H);

  if (cache != nullptr) {
    cache->batch = batch;
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h.begin(), h.end());
    cache->c_prev.assign(c.begin(), c.end());
    cache->gates.resize(static_cast<std::size_t>(batch) * 4 * H);
    cache->tanh_c.resize(static_cast<std::size_t>(batch) * H);
  }
  for (int n = 0; n < batch; ++n) {
    T* g = pre.data() + static_cast<std::size_t>(n) * 4 * H;
    for (int j = 0; j < H; ++j) {
      g[j] = sigmoid(g[j]);
      g[H + j] = sigmoid(g[H + j]);
      g[2 * H + j] = std::tanh(g[2 * H + j]);
      g[3 * H + j] = sigmoid(g[3 * H + j]);
      const std::size_t at = static_cast<std::size_t>(n) * H + j;
      const T c_new = g[H + j] * c[at] + g[j] * g[2 * H + j];
      const T tc = std::tanh(c_new);
      c[at] = c_new;
      h[at] = g[3 * H + j] * tc;
      if (cache != nullptr) cache->tanh_c[at] = tc;
    }
  }
  if (cache != nullptr) std::copy(pre.data(), pre.data() + pre.size(), cache->gates.begin());
}

template <typename T>
void LstmCell<T>::step_backward(const StepCache& cache, std::span<T> dh, std::span<T> dc, std::span<T> dx) {
  const int H = hidden_;
  const int batch = cache.batch;
  MatrixRM<T> dpre(batch, 4 * H);
  for (int n = 0; n < batch; ++n) {
    const T* g = cache.gates.data() + static_cast<std::size_t>(n) * 4 * H;
    T* d = dpre.data() + static_cast<std::size_t>(n) * 4 * H;
    for (int j = 0; j < H; ++j) {
      const std::size_t at = static_cast<std::size_t>(n) * H + j;
      const T i = g[j], f = g[H + j], gg = g[2 * H + j], o = g[3 * H + j];
      const T tc = cache.tanh_c[at];
      const T d_o = dh[at] * tc;
      const T d_c = dc[at] + dh[at] * o * (T(1) - tc * tc);
      d[j] = d_c * gg * i * (T(1) - i);
      d[H + j] = d_c * cache.c_prev[at] * f * (T(1) - f);
      d[2 * H + j] = d_c * i * (T(1) - gg * gg);
      d[3 * H + j] = d_o * o * (T(1) - o);
      dc[at] = d_c * f;
    }
  }
  Eigen::Map<const MatrixRM<T>> xm(cache.x.data(), batch, input_);
  Eigen::Map<const MatrixRM<T>> hm(cache.h_prev.data(), batch, H);
  Eigen::Map<MatrixRM<T>>(w_input.grad.data(), 4 * H, input_).noalias() += dpre.transpose() * xm;
  Eigen::Map<MatrixRM<T>>(w_hidden.grad.data(), 4 * H, H).noalias() += dpre.transpose() * hm;
  add_column_sums(dpre.data(), batch, 4 * H, bias.grad.data());
  Eigen::Map<MatrixRM<T>>(dh.data(), batch, H).noalias() =
      dpre * Eigen::Map<const MatrixRM<T>>(w_hidden.value.data(), 4 * H, H);
  if (!dx.empty()) {
    Eigen::Map<MatrixRM<T>>(dx.data(), batch, input_).noalias() =
        dpre * Eigen::Map<const MatrixRM<T>>(w_input.value.data(), 4 * H, input_);
  }
}

template class LstmCell<float>;
template class LstmCell<double>;

}  // namespace rdn::nn
