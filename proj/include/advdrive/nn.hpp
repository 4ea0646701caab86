#pragma once

// Convolutional actor-critic network with hand-written reverse-mode
// gradients and an Adam optimizer. All arithmetic is in double precision.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advdrive/raster.hpp"
#include "advdrive/world.hpp"

namespace advdrive {

inline constexpr int kNumActions = 9;

struct ConvSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  bool operator==(const ConvSpec&) const = default;
};

// Trunk topology. The input is always an 84x84x3 observation; `input_pool`
// averages pool x pool blocks first (exact for lite21 replicated images).
struct NetArch {
  std::string name;
  int input_pool = 1;
  std::vector<ConvSpec> convs;
  int dense_units = 0;

  // 32x8x8/4, 64x4x4/2, 64x3x3/1, dense 512.
  static NetArch Mnih84();
  // Reduced trunk over the 21x21 grid of a lite21 observation.
  static NetArch Lite21();
  static NetArch ForMode(ObsMode mode);
  static NetArch ByName(const std::string& name);

  int InputSize() const { return kObsSize / input_pool; }
  // Spatial side length after each conv layer.
  std::vector<int> ConvSizes() const;
  int FlatSize() const;
  bool operator==(const NetArch&) const = default;
};

struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

class NetworkParams {
 public:
  NetArch arch;
  std::vector<ParamArray> arrays;

  static NetworkParams Zeros(const NetArch& arch);
  // Orthogonal init: gain sqrt(2) on the trunk, 0.01 policy head, 1.0 value
  // head; zero biases.
  static NetworkParams Initialize(const NetArch& arch, std::uint64_t seed);

  ParamArray& Get(const std::string& name);
  const ParamArray& Get(const std::string& name) const;
  std::size_t TotalSize() const;
  bool AllFinite() const;
  NetworkParams ZerosLike() const { return Zeros(arch); }
  void AddScaled(const NetworkParams& other, double scale);
  bool SameShape(const NetworkParams& other) const;
  bool operator==(const NetworkParams& o) const;
};

struct NetOutput {
  std::array<double, kNumActions> logits{};
  double value = 0.0;
};

// Activations retained for the backward pass.
struct ForwardCache {
  std::vector<double> input;                  // pooled input
  std::vector<std::vector<double>> conv_out;  // post-ReLU
  std::vector<double> dense_out;              // post-ReLU
};

NetOutput Forward(const NetworkParams& params, const ObservationImage& obs,
                  ForwardCache* cache = nullptr);
// `input` is 84*84*3 row-major HWC; throws ContractViolation on size mismatch.
NetOutput Forward(const NetworkParams& params, std::span<const double> input,
                  ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) into `grads` given upstream gradients at
// the logits and the value output.
void Backward(const NetworkParams& params, const ForwardCache& cache,
              std::span<const double> dlogits, double dvalue, NetworkParams& grads);

NetworkParams Backward(const NetworkParams& params, const ForwardCache& cache,
                       std::span<const double> dlogits, double dvalue);

namespace layers {

// HWC layout. Weights are [filters][kernel][kernel][channels].
void Conv2dForward(std::span<const double> in, int size, int channels,
                   std::span<const double> weight, std::span<const double> bias,
                   const ConvSpec& spec, std::span<double> out);
// `din` may be empty when the input gradient is not needed.
void Conv2dBackward(std::span<const double> in, int size, int channels,
                    std::span<const double> weight, const ConvSpec& spec,
                    std::span<const double> dout, std::span<double> din,
                    std::span<double> dweight, std::span<double> dbias);

// Weights are [out][in].
void DenseForward(std::span<const double> in, std::span<const double> weight,
                  std::span<const double> bias, std::span<double> out);
void DenseBackward(std::span<const double> in, std::span<const double> weight,
                   std::span<const double> dout, std::span<double> din,
                   std::span<double> dweight, std::span<double> dbias);

void ReluInPlace(std::span<double> x);
// Masks `grad` where the ReLU output was zero.
void ReluBackward(std::span<const double> out, std::span<double> grad);

void AvgPoolForward(std::span<const double> in, int size, int channels, int factor,
                    std::span<double> out);
void AvgPoolBackward(int size, int channels, int factor, std::span<const double> dout,
                     std::span<double> din);

int ConvOutputSize(int size, const ConvSpec& spec);

}  // namespace layers

struct AdamState {
  NetworkParams m;
  NetworkParams v;
  std::int64_t step = 0;

  static AdamState Zeros(const NetArch& arch);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam step in place. Throws NumericError (leaving params and
// state untouched) if any gradient is non-finite, ContractViolation on shape
// mismatch or lr <= 0.
void AdamUpdate(NetworkParams& params, const NetworkParams& grads, AdamState& state, double lr,
                const AdamConfig& cfg = {});

struct PolicyDistribution {
  std::array<double, kNumActions> log_probs{};
  double entropy = 0.0;

  static PolicyDistribution FromLogits(std::span<const double> logits);
};

struct ActionSample {
  int index = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
};

ActionSample SampleAction(std::span<const double> logits, std::mt19937_64& rng);
ActionSample GreedyAction(std::span<const double> logits);

// 3x3 grid: index = 3 * steer_slot + longitudinal_slot with steer
// {-0.5, 0, +0.5} and longitudinal {throttle 0.6, coast, brake 0.6}.
ActionCommand ActionFromIndex(int index);

}  // namespace advdrive
