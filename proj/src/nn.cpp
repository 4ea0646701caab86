#include "advdrive/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <limits>
#include <numeric>

#include "advdrive/errors.hpp"
#include "advdrive/random.hpp"

namespace advdrive {

NetArch NetArch::Mnih84() {
  return {"mnih84", 1, {{32, 8, 4}, {64, 4, 2}, {64, 3, 1}}, 512};
}

NetArch NetArch::Lite21() {
  return {"lite21", 4, {{8, 3, 2}, {16, 3, 2}, {16, 3, 1}}, 64};
}

NetArch NetArch::ForMode(ObsMode mode) {
  return mode == ObsMode::kLite21 ? Lite21() : Mnih84();
}

NetArch NetArch::ByName(const std::string& name) {
  if (name == "mnih84") return Mnih84();
  if (name == "lite21") return Lite21();
  throw ContractViolation("unknown network architecture '" + name + "'");
}

std::vector<int> NetArch::ConvSizes() const {
  std::vector<int> sizes;
  int s = InputSize();
  for (const auto& c : convs) {
    s = layers::ConvOutputSize(s, c);
    sizes.push_back(s);
  }
  return sizes;
}

int NetArch::FlatSize() const {
  const int s = convs.empty() ? InputSize() : ConvSizes().back();
  const int ch = convs.empty() ? kObsChannels : convs.back().filters;
  return s * s * ch;
}

namespace {

std::size_t Product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

ParamArray MakeArray(std::string name, std::vector<int> shape) {
  ParamArray a{std::move(name), std::move(shape), {}};
  a.values.assign(Product(a.shape), 0.0);
  return a;
}

// Fills a [rows x cols] row-major block with a scaled orthogonal matrix.
void Orthogonal(std::vector<double>& out, int rows, int cols, double gain, std::mt19937_64& rng) {
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (int j = 0; j < small; ++j) {
    for (int i = 0; i < big; ++i) g(i, j) = StandardNormal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double v = rows >= cols ? q(i, j) : q(j, i);
      out[static_cast<std::size_t>(i) * cols + j] = gain * v;
    }
  }
}

}  // namespace

NetworkParams NetworkParams::Zeros(const NetArch& arch) {
  NetworkParams p;
  p.arch = arch;
  int channels = kObsChannels;
  for (std::size_t i = 0; i < arch.convs.size(); ++i) {
    const auto& c = arch.convs[i];
    const std::string prefix = "conv" + std::to_string(i + 1);
    p.arrays.push_back(MakeArray(prefix + ".weight", {c.filters, c.kernel, c.kernel, channels}));
    p.arrays.push_back(MakeArray(prefix + ".bias", {c.filters}));
    channels = c.filters;
  }
  p.arrays.push_back(MakeArray("dense.weight", {arch.dense_units, arch.FlatSize()}));
  p.arrays.push_back(MakeArray("dense.bias", {arch.dense_units}));
  p.arrays.push_back(MakeArray("policy.weight", {kNumActions, arch.dense_units}));
  p.arrays.push_back(MakeArray("policy.bias", {kNumActions}));
  p.arrays.push_back(MakeArray("value.weight", {1, arch.dense_units}));
  p.arrays.push_back(MakeArray("value.bias", {1}));
  return p;
}

NetworkParams NetworkParams::Initialize(const NetArch& arch, std::uint64_t seed) {
  NetworkParams p = Zeros(arch);
  std::mt19937_64 rng(seed);
  for (auto& a : p.arrays) {
    if (a.shape.size() < 2) continue;  // biases stay zero
    const int rows = a.shape[0];
    const int cols = static_cast<int>(a.values.size() / rows);
    double gain = std::sqrt(2.0);
    if (a.name == "policy.weight") gain = 0.01;
    if (a.name == "value.weight") gain = 1.0;
    Orthogonal(a.values, rows, cols, gain, rng);
  }
  return p;
}

ParamArray& NetworkParams::Get(const std::string& name) {
  for (auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ContractViolation("no parameter array named '" + name + "'");
}

const ParamArray& NetworkParams::Get(const std::string& name) const {
  return const_cast<NetworkParams*>(this)->Get(name);
}

std::size_t NetworkParams::TotalSize() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.values.size();
  return n;
}

bool NetworkParams::AllFinite() const {
  for (const auto& a : arrays) {
    for (double v : a.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void NetworkParams::AddScaled(const NetworkParams& other, double scale) {
  if (!SameShape(other)) throw ContractViolation("parameter shape mismatch");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& dst = arrays[i].values;
    const auto& src = other.arrays[i].values;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

bool NetworkParams::SameShape(const NetworkParams& other) const {
  if (arrays.size() != other.arrays.size()) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != other.arrays[i].name || arrays[i].shape != other.arrays[i].shape) {
      return false;
    }
  }
  return true;
}

bool NetworkParams::operator==(const NetworkParams& o) const {
  if (!(arch == o.arch) || !SameShape(o)) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    // Bitwise comparison so that -0.0 and NaN payloads count as differences.
    const auto& a = arrays[i].values;
    const auto& b = o.arrays[i].values;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

namespace layers {

int ConvOutputSize(int size, const ConvSpec& spec) {
  if (size < spec.kernel) throw ContractViolation("conv kernel larger than its input");
  return (size - spec.kernel) / spec.stride + 1;
}

void Conv2dForward(std::span<const double> in, int size, int channels,
                   std::span<const double> weight, std::span<const double> bias,
                   const ConvSpec& spec, std::span<double> out) {
  const int out_size = ConvOutputSize(size, spec);
  const int k = spec.kernel;
  const int row_len = k * channels;
  for (int oy = 0; oy < out_size; ++oy) {
    for (int ox = 0; ox < out_size; ++ox) {
      double* o = &out[(static_cast<std::size_t>(oy) * out_size + ox) * spec.filters];
      for (int f = 0; f < spec.filters; ++f) o[f] = bias[f];
      for (int ky = 0; ky < k; ++ky) {
        const double* row =
            &in[(static_cast<std::size_t>(oy * spec.stride + ky) * size + ox * spec.stride) * channels];
        for (int f = 0; f < spec.filters; ++f) {
          const double* w = &weight[(static_cast<std::size_t>(f) * k + ky) * row_len];
          double acc = 0.0;
          for (int j = 0; j < row_len; ++j) acc += w[j] * row[j];
          o[f] += acc;
        }
      }
    }
  }
}

void Conv2dBackward(std::span<const double> in, int size, int channels,
                    std::span<const double> weight, const ConvSpec& spec,
                    std::span<const double> dout, std::span<double> din,
                    std::span<double> dweight, std::span<double> dbias) {
  const int out_size = ConvOutputSize(size, spec);
  const int k = spec.kernel;
  const int row_len = k * channels;
  for (int oy = 0; oy < out_size; ++oy) {
    for (int ox = 0; ox < out_size; ++ox) {
      const double* g = &dout[(static_cast<std::size_t>(oy) * out_size + ox) * spec.filters];
      for (int f = 0; f < spec.filters; ++f) dbias[f] += g[f];
      for (int ky = 0; ky < k; ++ky) {
        const std::size_t base =
            (static_cast<std::size_t>(oy * spec.stride + ky) * size + ox * spec.stride) * channels;
        const double* row = &in[base];
        for (int f = 0; f < spec.filters; ++f) {
          const double gf = g[f];
          if (gf == 0.0) continue;
          const std::size_t woff = (static_cast<std::size_t>(f) * k + ky) * row_len;
          double* dw = &dweight[woff];
          for (int j = 0; j < row_len; ++j) dw[j] += gf * row[j];
          if (!din.empty()) {
            const double* w = &weight[woff];
            double* di = &din[base];
            for (int j = 0; j < row_len; ++j) di[j] += gf * w[j];
          }
        }
      }
    }
  }
}

void DenseForward(std::span<const double> in, std::span<const double> weight,
                  std::span<const double> bias, std::span<double> out) {
  const std::size_t n_in = in.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double* w = &weight[o * n_in];
    double acc = bias[o];
    for (std::size_t j = 0; j < n_in; ++j) acc += w[j] * in[j];
    out[o] = acc;
  }
}

void DenseBackward(std::span<const double> in, std::span<const double> weight,
                   std::span<const double> dout, std::span<double> din,
                   std::span<double> dweight, std::span<double> dbias) {
  const std::size_t n_in = in.size();
  for (std::size_t o = 0; o < dout.size(); ++o) {
    const double g = dout[o];
    dbias[o] += g;
    if (g == 0.0) continue;
    double* dw = &dweight[o * n_in];
    for (std::size_t j = 0; j < n_in; ++j) dw[j] += g * in[j];
    if (!din.empty()) {
      const double* w = &weight[o * n_in];
      for (std::size_t j = 0; j < n_in; ++j) din[j] += g * w[j];
    }
  }
}

void ReluInPlace(std::span<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

void ReluBackward(std::span<const double> out, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(out[i] > 0.0)) grad[i] = 0.0;
  }
}

void AvgPoolForward(std::span<const double> in, int size, int channels, int factor,
                    std::span<double> out) {
  const int out_size = size / factor;
  const double scale = 1.0 / (factor * factor);
  std::fill(out.begin(), out.end(), 0.0);
  for (int y = 0; y < out_size * factor; ++y) {
    for (int x = 0; x < out_size * factor; ++x) {
      const double* src = &in[(static_cast<std::size_t>(y) * size + x) * channels];
      double* dst = &out[(static_cast<std::size_t>(y / factor) * out_size + x / factor) * channels];
      for (int c = 0; c < channels; ++c) dst[c] += src[c] * scale;
    }
  }
}

void AvgPoolBackward(int size, int channels, int factor, std::span<const double> dout,
                     std::span<double> din) {
  const int out_size = size / factor;
  const double scale = 1.0 / (factor * factor);
  for (int y = 0; y < out_size * factor; ++y) {
    for (int x = 0; x < out_size * factor; ++x) {
      const double* src =
          &dout[(static_cast<std::size_t>(y / factor) * out_size + x / factor) * channels];
      double* dst = &din[(static_cast<std::size_t>(y) * size + x) * channels];
      for (int c = 0; c < channels; ++c) dst[c] += src[c] * scale;
    }
  }
}

}  // namespace layers

namespace {

constexpr std::size_t kInputLength = static_cast<std::size_t>(kObsSize) * kObsSize * kObsChannels;

std::span<const double> Values(const NetworkParams& p, std::size_t index) {
  return p.arrays[index].values;
}

std::span<double> Values(NetworkParams& p, std::size_t index) { return p.arrays[index].values; }

}  // namespace

NetOutput Forward(const NetworkParams& params, const ObservationImage& obs, ForwardCache* cache) {
  const std::vector<double> input = obs.ToDoubles();
  return Forward(params, input, cache);
}

NetOutput Forward(const NetworkParams& params, std::span<const double> input, ForwardCache* cache) {
  if (input.size() != kInputLength) {
    throw ContractViolation("network input must be 84x84x3, got " + std::to_string(input.size()) +
                            " values");
  }
  const NetArch& arch = params.arch;
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;

  const int in_size = arch.InputSize();
  if (arch.input_pool > 1) {
    c.input.assign(static_cast<std::size_t>(in_size) * in_size * kObsChannels, 0.0);
    layers::AvgPoolForward(input, kObsSize, kObsChannels, arch.input_pool, c.input);
  } else {
    c.input.assign(input.begin(), input.end());
  }

  c.conv_out.resize(arch.convs.size());
  int size = in_size;
  int channels = kObsChannels;
  std::span<const double> x = c.input;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < arch.convs.size(); ++i) {
    const ConvSpec& spec = arch.convs[i];
    const int out_size = layers::ConvOutputSize(size, spec);
    auto& out = c.conv_out[i];
    out.assign(static_cast<std::size_t>(out_size) * out_size * spec.filters, 0.0);
    layers::Conv2dForward(x, size, channels, Values(params, idx), Values(params, idx + 1), spec, out);
    layers::ReluInPlace(out);
    x = out;
    size = out_size;
    channels = spec.filters;
    idx += 2;
  }

  c.dense_out.assign(arch.dense_units, 0.0);
  layers::DenseForward(x, Values(params, idx), Values(params, idx + 1), c.dense_out);
  layers::ReluInPlace(c.dense_out);
  idx += 2;

  NetOutput out;
  layers::DenseForward(c.dense_out, Values(params, idx), Values(params, idx + 1), out.logits);
  idx += 2;
  std::array<double, 1> value{};
  layers::DenseForward(c.dense_out, Values(params, idx), Values(params, idx + 1), value);
  out.value = value[0];
  return out;
}

void Backward(const NetworkParams& params, const ForwardCache& cache,
              std::span<const double> dlogits, double dvalue, NetworkParams& grads) {
  if (dlogits.size() != kNumActions) throw ContractViolation("dlogits must have 9 entries");
  if (!params.SameShape(grads)) throw ContractViolation("gradient shape mismatch");
  const NetArch& arch = params.arch;
  const std::size_t n_conv = arch.convs.size();
  const std::size_t dense_idx = 2 * n_conv;
  const std::size_t policy_idx = dense_idx + 2;
  const std::size_t value_idx = dense_idx + 4;

  std::vector<double> d_hidden(arch.dense_units, 0.0);
  layers::DenseBackward(cache.dense_out, Values(params, policy_idx), dlogits, d_hidden,
                        Values(grads, policy_idx), Values(grads, policy_idx + 1));
  const std::array<double, 1> dv{dvalue};
  layers::DenseBackward(cache.dense_out, Values(params, value_idx), dv, d_hidden,
                        Values(grads, value_idx), Values(grads, value_idx + 1));
  layers::ReluBackward(cache.dense_out, d_hidden);

  std::span<const double> flat =
      n_conv == 0 ? std::span<const double>(cache.input) : std::span<const double>(cache.conv_out.back());
  std::vector<double> d_flat(flat.size(), 0.0);
  layers::DenseBackward(flat, Values(params, dense_idx), d_hidden,
                        n_conv == 0 ? std::span<double>() : std::span<double>(d_flat),
                        Values(grads, dense_idx), Values(grads, dense_idx + 1));

  const std::vector<int> sizes = arch.ConvSizes();
  std::vector<double> d_out = std::move(d_flat);
  for (std::size_t i = n_conv; i-- > 0;) {
    layers::ReluBackward(cache.conv_out[i], d_out);
    const int in_size = i == 0 ? arch.InputSize() : sizes[i - 1];
    const int in_channels = i == 0 ? kObsChannels : arch.convs[i - 1].filters;
    std::span<const double> in = i == 0 ? std::span<const double>(cache.input)
                                        : std::span<const double>(cache.conv_out[i - 1]);
    std::vector<double> d_in;
    if (i > 0) d_in.assign(in.size(), 0.0);
    layers::Conv2dBackward(in, in_size, in_channels, Values(params, 2 * i), arch.convs[i], d_out,
                           d_in, Values(grads, 2 * i), Values(grads, 2 * i + 1));
    d_out = std::move(d_in);
  }
}

NetworkParams Backward(const NetworkParams& params, const ForwardCache& cache,
                       std::span<const double> dlogits, double dvalue) {
  NetworkParams grads = params.ZerosLike();
  Backward(params, cache, dlogits, dvalue, grads);
  return grads;
}

AdamState AdamState::Zeros(const NetArch& arch) {
  return {NetworkParams::Zeros(arch), NetworkParams::Zeros(arch), 0};
}

void AdamUpdate(NetworkParams& params, const NetworkParams& grads, AdamState& state, double lr,
                const AdamConfig& cfg) {
  if (!(lr > 0.0)) throw ContractViolation("learning rate must be positive");
  if (!params.SameShape(grads) || !params.SameShape(state.m) || !params.SameShape(state.v)) {
    throw ContractViolation("adam shape mismatch");
  }
  for (const auto& a : grads.arrays) {
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (!std::isfinite(a.values[i])) {
        throw NumericError("non-finite gradient in '" + a.name + "' at index " + std::to_string(i));
      }
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.arrays.size(); ++k) {
    auto& w = params.arrays[k].values;
    auto& m = state.m.arrays[k].values;
    auto& v = state.v.arrays[k].values;
    const auto& g = grads.arrays[k].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

PolicyDistribution PolicyDistribution::FromLogits(std::span<const double> logits) {
  if (logits.size() != kNumActions) throw ContractViolation("expected 9 logits");
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - max);
  const double lse = max + std::log(sum);
  PolicyDistribution d;
  for (int i = 0; i < kNumActions; ++i) {
    d.log_probs[i] = logits[i] - lse;
    const double p = std::exp(d.log_probs[i]);
    if (p > 0.0) d.entropy -= p * d.log_probs[i];
  }
  return d;
}

ActionSample SampleAction(std::span<const double> logits, std::mt19937_64& rng) {
  const PolicyDistribution d = PolicyDistribution::FromLogits(logits);
  const double u = UniformUnit(rng);
  double cumulative = 0.0;
  int chosen = kNumActions - 1;
  for (int i = 0; i < kNumActions; ++i) {
    cumulative += std::exp(d.log_probs[i]);
    if (u < cumulative) {
      chosen = i;
      break;
    }
  }
  // Never return a zero-probability action from rounding at the tail.
  while (std::exp(d.log_probs[chosen]) == 0.0 && chosen > 0) --chosen;
  return {chosen, d.log_probs[chosen], d.entropy};
}

ActionSample GreedyAction(std::span<const double> logits) {
  const PolicyDistribution d = PolicyDistribution::FromLogits(logits);
  const int best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  return {best, d.log_probs[best], d.entropy};
}

ActionCommand ActionFromIndex(int index) {
  if (index < 0 || index >= kNumActions) throw ContractViolation("action index out of range");
  static constexpr double kSteer[3] = {-0.5, 0.0, 0.5};
  ActionCommand a;
  a.steer = kSteer[index / 3];
  switch (index % 3) {
    case 0:
      a.throttle = 0.6;
      break;
    case 1:
      break;
    case 2:
      a.brake = 0.6;
      break;
  }
  return a;
}

}  // namespace advdrive
