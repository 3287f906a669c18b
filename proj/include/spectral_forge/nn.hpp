#pragma once

#include "spectral_forge/core.hpp"

#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spectral_forge::nn {

/// 64-byte aligned storage. Eigen's vectorized kernels choose their peeling
/// by address alignment; a fixed base alignment makes the summation order a
/// function of the shapes alone, so results do not vary between runs.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major buffer of doubles with an explicit shape.
struct Tensor {
    std::vector<std::size_t> shape;
    Buffer data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_in);
    Tensor(std::vector<std::size_t> shape_in, std::span<const double> data_in);
    Tensor(std::vector<std::size_t> shape_in, std::initializer_list<double> data_in)
        : Tensor(std::move(shape_in), std::span<const double>(data_in.begin(), data_in.size())) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(std::span<const std::size_t> shape) noexcept;
std::string shape_string(std::span<const std::size_t> shape);

enum class Padding { Same, None };
enum class Activation { Relu, Identity };
enum class Mode { Train, Eval };

struct Conv1DSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    Padding padding = Padding::Same;

    std::size_t output_length(std::size_t input_length) const;
    /// Zeros added before the first sample.
    std::size_t pad_left(std::size_t input_length) const;
    std::size_t padded_length(std::size_t input_length) const;

    friend bool operator==(const Conv1DSpec&, const Conv1DSpec&) = default;
};

struct DenseSpec {
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

struct DropoutSpec {
    double rate = 0.0;
    friend bool operator==(const DropoutSpec&, const DropoutSpec&) = default;
};

struct FlattenSpec {
    friend bool operator==(const FlattenSpec&, const FlattenSpec&) = default;
};

struct ActivationSpec {
    Activation function = Activation::Relu;
    friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

using LayerSpec = std::variant<Conv1DSpec, DenseSpec, DropoutSpec, FlattenSpec, ActivationSpec>;

/// Layer graph for a single-channel spectrum of `input_len` points.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    std::size_t input_len = 0;
    std::size_t output_dim = kTargetCount;

    /// Walks the layer shapes; throws ValidationError on the first mismatch.
    void validate() const;
    std::size_t parameter_count() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// JSON document listing every layer with explicit hyperparameters.
std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(std::string_view text);

/// Two same-padded stride-1 convolutions with ReLU, flatten, dropout, then
/// dense 128 -> 16 -> output_dim. `kernel` defaults to 64.
ModelSpec build_fishcnn(std::size_t input_len, std::size_t kernel = 64, std::size_t filters = 16,
                        double dropout = 0.10, std::size_t output_dim = kTargetCount);

/// 1 + sum over conv layers of (k_i - 1) * prod_{j<i} s_j.
std::size_t receptive_field(const ModelSpec& spec);

// ---- layer kernels -------------------------------------------------------

/// Direct uses im2col and a matrix product. Fft multiplies in the frequency
/// domain and needs stride 1. Auto picks Fft for stride-1 kernels of at least
/// kFftMinKernel taps.
enum class ConvAlgorithm { Auto, Direct, Fft };

inline constexpr std::size_t kFftMinKernel = 32;

/// input [batch, in_ch, len], weight [out_ch, in_ch, kernel], bias [out_ch]
Tensor conv1d_forward(const Tensor& input, const Conv1DSpec& spec, const Tensor& weight, const Tensor& bias,
                      ConvAlgorithm algorithm = ConvAlgorithm::Auto);

struct ParamGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

/// With `input_grad` false the returned input gradient is empty.
ParamGrads conv1d_backward(const Tensor& upstream, const Tensor& input, const Conv1DSpec& spec, const Tensor& weight,
                           ConvAlgorithm algorithm = ConvAlgorithm::Auto, bool input_grad = true);

/// input [batch, in_dim], weight [out_dim, in_dim], bias [out_dim]
Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
ParamGrads dense_backward(const Tensor& upstream, const Tensor& input, const Tensor& weight, bool input_grad = true);

Tensor activation_forward(const Tensor& input, Activation function);
Tensor activation_backward(const Tensor& upstream, const Tensor& input, Activation function);

struct DropoutResult {
    Tensor output;
    /// Per-element multiplier applied in the forward pass: 0 or 1 / (1 - rate).
    Tensor mask;
};

/// Inverted dropout. Train mode keeps each element with probability
/// 1 - rate and rescales it; eval mode is the identity.
DropoutResult dropout_forward(const Tensor& input, double rate, Mode mode, std::uint64_t seed);
Tensor dropout_backward(const Tensor& upstream, const Tensor& mask);

struct LossResult {
    double value = 0.0;
    Tensor grad;
};

inline constexpr double kDefaultHuberDelta = 1.0;

/// Mean over all elements of the Huber penalty of pred - target.
LossResult huber_loss(const Tensor& pred, const Tensor& target, double delta = kDefaultHuberDelta);

// ---- optimizer -----------------------------------------------------------

struct AdamWConfig {
    double lr = 0.0015;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.001;
};

/// AdamW with decoupled weight decay:
///   theta <- theta * (1 - lr * wd) - lr * mhat / (sqrt(vhat) + eps)
class AdamW {
public:
    AdamW(AdamWConfig cfg, std::span<const Tensor> params);

    /// Returns false and leaves every buffer untouched when a gradient is
    /// not finite.
    bool step(std::span<Tensor> params, std::span<const Tensor> grads);

    const AdamWConfig& config() const noexcept { return cfg_; }
    std::size_t steps() const noexcept { return t_; }
    std::size_t skipped() const noexcept { return skipped_; }
    std::span<const Tensor> first_moments() const noexcept { return m_; }
    std::span<const Tensor> second_moments() const noexcept { return v_; }

private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
    std::size_t skipped_ = 0;
};

// ---- network -------------------------------------------------------------

/// Parameters of a model: weight and bias tensors for every conv/dense layer,
/// in layer order, with matching gradient buffers.
struct ModelState {
    std::vector<Tensor> params;
    std::vector<Tensor> grads;

    void zero_grad();
};

/// Kaiming-uniform (fan-in) weights, zero biases, drawn from
/// derive_seed(seed, "init", {layer index}).
ModelState init_state(const ModelSpec& spec, std::uint64_t seed);

/// Forward/backward executor holding the activation cache of the last
/// forward pass.
class Network {
public:
    Network(ModelSpec spec, ModelState state);
    Network(ModelSpec spec, std::uint64_t init_seed);

    const ModelSpec& spec() const noexcept { return spec_; }
    ModelState& state() noexcept { return state_; }
    const ModelState& state() const noexcept { return state_; }

    /// input [batch, input_len] or [batch, 1, input_len]; returns [batch, output_dim].
    Tensor forward(const Tensor& input, Mode mode, std::uint64_t dropout_seed = 0);

    /// Gradient w.r.t. the last forward's output. Overwrites state().grads
    /// and returns the gradient w.r.t. the input, or an empty tensor when
    /// `input_grad` is false (the first layer then skips that product).
    Tensor backward(const Tensor& upstream, bool input_grad = true);

private:
    struct LayerCache {
        Tensor input;
        Tensor mask;
        std::vector<std::size_t> shape;
    };

    ModelSpec spec_;
    ModelState state_;
    std::vector<std::size_t> param_offset_;
    std::vector<LayerCache> cache_;
    std::vector<std::size_t> input_shape_;
};

}  // namespace spectral_forge::nn
