#include "spectral_forge/nn.hpp"

#include "spectral_forge/rng.hpp"

#include "conv_fft.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spectral_forge::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

void require_shape(const Tensor& t, std::initializer_list<std::size_t> expected, const char* what) {
    const std::vector<std::size_t> e(expected);
    if (t.shape != e) {
        throw ValidationError(std::string(what) + " has shape " + shape_string(t.shape) + ", expected " +
                              shape_string(e));
    }
}

/// Copies sample b of `input` into a zero-padded C x P buffer.
void pad_sample(const Tensor& input, std::size_t b, std::size_t left, std::size_t padded, std::vector<double>& out) {
    const std::size_t channels = input.dim(1);
    const std::size_t len = input.dim(2);
    out.assign(channels * padded, 0.0);
    const double* src = input.data.data() + b * channels * len;
    for (std::size_t c = 0; c < channels; ++c) {
        std::copy_n(src + c * len, len, out.data() + c * padded + left);
    }
}

/// cols(c * K + j, i) = padded(c, i * stride + j)
void im2col(const std::vector<double>& padded, std::size_t channels, std::size_t padded_len, std::size_t kernel,
            std::size_t stride, std::size_t out_len, RowMat& cols) {
    cols.resize(static_cast<Eigen::Index>(channels * kernel), static_cast<Eigen::Index>(out_len));
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = padded.data() + c * padded_len;
        for (std::size_t j = 0; j < kernel; ++j) {
            double* dst = cols.data() + (c * kernel + j) * out_len;
            if (stride == 1) {
                std::copy_n(src + j, out_len, dst);
            } else {
                for (std::size_t i = 0; i < out_len; ++i) dst[i] = src[i * stride + j];
            }
        }
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in)
    : shape(std::move(shape_in)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::span<const double> data_in)
    : shape(std::move(shape_in)), data(data_in.begin(), data_in.end()) {
    if (data.size() != shape_size(shape)) {
        throw ValidationError("tensor of shape " + shape_string(shape) + " cannot hold " +
                              std::to_string(data.size()) + " values");
    }
}

std::size_t shape_size(std::span<const std::size_t> shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---- conv ------------------------------------------------------------------

std::size_t Conv1DSpec::output_length(std::size_t input_length) const {
    if (padding == Padding::Same) return (input_length + stride - 1) / stride;
    require(kernel <= input_length, "kernel " + std::to_string(kernel) + " exceeds input length " +
                                        std::to_string(input_length));
    return (input_length - kernel) / stride + 1;
}

std::size_t Conv1DSpec::pad_left(std::size_t input_length) const {
    if (padding == Padding::None) return 0;
    const std::size_t out = output_length(input_length);
    const std::size_t needed = (out - 1) * stride + kernel;
    return needed > input_length ? (needed - input_length) / 2 : 0;
}

std::size_t Conv1DSpec::padded_length(std::size_t input_length) const {
    if (padding == Padding::None) return input_length;
    const std::size_t out = output_length(input_length);
    return std::max(input_length, (out - 1) * stride + kernel);
}

namespace {

bool pick_fft(const Conv1DSpec& spec, ConvAlgorithm algorithm) {
    if (algorithm == ConvAlgorithm::Fft) {
        require(spec.stride == 1, "the FFT convolution needs stride 1");
        return true;
    }
    return algorithm == ConvAlgorithm::Auto && spec.stride == 1 && spec.kernel >= kFftMinKernel;
}

}  // namespace

Tensor conv1d_forward(const Tensor& input, const Conv1DSpec& spec, const Tensor& weight, const Tensor& bias,
                      ConvAlgorithm algorithm) {
    require(spec.kernel >= 1 && spec.stride >= 1, "conv kernel and stride must be at least 1");
    require(input.rank() == 3 && input.dim(1) == spec.in_channels,
            "conv input has shape " + shape_string(input.shape) + ", expected [batch, " +
                std::to_string(spec.in_channels) + ", len]");
    require_shape(weight, {spec.out_channels, spec.in_channels, spec.kernel}, "conv weight");
    require_shape(bias, {spec.out_channels}, "conv bias");
    const std::size_t batch = input.dim(0);
    const std::size_t len = input.dim(2);
    const std::size_t padded_len = spec.padded_length(len);
    require(spec.kernel <= padded_len, "kernel " + std::to_string(spec.kernel) + " exceeds padded length " +
                                           std::to_string(padded_len));
    const std::size_t out_len = spec.output_length(len);
    const std::size_t left = spec.pad_left(len);
    const auto ck = static_cast<Eigen::Index>(spec.in_channels * spec.kernel);
    const auto out_ch = static_cast<Eigen::Index>(spec.out_channels);

    if (pick_fft(spec, algorithm)) return detail::fft_conv_forward(input, spec, weight, bias, left, padded_len, out_len);

    Tensor out({batch, spec.out_channels, out_len});
    const ConstRowMap w(weight.data.data(), out_ch, ck);
    const Eigen::Map<const Eigen::VectorXd> b(bias.data.data(), out_ch);
    std::vector<double> padded;
    RowMat cols;
    for (std::size_t s = 0; s < batch; ++s) {
        pad_sample(input, s, left, padded_len, padded);
        im2col(padded, spec.in_channels, padded_len, spec.kernel, spec.stride, out_len, cols);
        RowMap o(out.data.data() + s * spec.out_channels * out_len, out_ch, static_cast<Eigen::Index>(out_len));
        o.noalias() = w * cols;
        o.colwise() += b;
    }
    return out;
}

ParamGrads conv1d_backward(const Tensor& upstream, const Tensor& input, const Conv1DSpec& spec,
                           const Tensor& weight, ConvAlgorithm algorithm, bool input_grad) {
    require(input.rank() == 3 && input.dim(1) == spec.in_channels, "conv backward: cached input shape mismatch");
    require_shape(weight, {spec.out_channels, spec.in_channels, spec.kernel}, "conv weight");
    const std::size_t batch = input.dim(0);
    const std::size_t len = input.dim(2);
    const std::size_t out_len = spec.output_length(len);
    require_shape(upstream, {batch, spec.out_channels, out_len}, "conv upstream gradient");
    const std::size_t padded_len = spec.padded_length(len);
    const std::size_t left = spec.pad_left(len);
    const auto ck = static_cast<Eigen::Index>(spec.in_channels * spec.kernel);
    const auto out_ch = static_cast<Eigen::Index>(spec.out_channels);
    const auto ol = static_cast<Eigen::Index>(out_len);
    if (pick_fft(spec, algorithm)) {
        return detail::fft_conv_backward(upstream, input, spec, weight, left, padded_len, out_len, input_grad);
    }

    ParamGrads g{Tensor(input_grad ? input.shape : std::vector<std::size_t>{0}), Tensor(weight.shape),
                 Tensor({spec.out_channels})};
    const ConstRowMap w(weight.data.data(), out_ch, ck);
    RowMap dw(g.weight.data.data(), out_ch, ck);
    std::vector<double> padded;
    std::vector<double> dpadded;
    RowMat cols;
    RowMat dcols;
    for (std::size_t s = 0; s < batch; ++s) {
        const ConstRowMap dout(upstream.data.data() + s * spec.out_channels * out_len, out_ch, ol);
        pad_sample(input, s, left, padded_len, padded);
        im2col(padded, spec.in_channels, padded_len, spec.kernel, spec.stride, out_len, cols);
        dw.noalias() += dout * cols.transpose();
        // Plain loops: Eigen reductions peel by address alignment, which
        // makes the summation order, and so the rounding, vary between runs.
        const double* up = upstream.data.data() + s * spec.out_channels * out_len;
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            double sum = 0.0;
            for (std::size_t i = 0; i < out_len; ++i) sum += up[o * out_len + i];
            g.bias.data[o] += sum;
        }
        if (!input_grad) continue;
        dcols.noalias() = w.transpose() * dout;

        dpadded.assign(spec.in_channels * padded_len, 0.0);
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
            double* dst = dpadded.data() + c * padded_len;
            for (std::size_t j = 0; j < spec.kernel; ++j) {
                const double* src = dcols.data() + (c * spec.kernel + j) * out_len;
                for (std::size_t i = 0; i < out_len; ++i) dst[i * spec.stride + j] += src[i];
            }
        }
        double* dx = g.input.data.data() + s * spec.in_channels * len;
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
            std::copy_n(dpadded.data() + c * padded_len + left, len, dx + c * len);
        }
    }
    return g;
}

// ---- dense -----------------------------------------------------------------

Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require(weight.rank() == 2, "dense weight must be [out_dim, in_dim]");
    const std::size_t out_dim = weight.dim(0);
    const std::size_t in_dim = weight.dim(1);
    require(input.rank() == 2 && input.dim(1) == in_dim,
            "dense input has shape " + shape_string(input.shape) + ", expected [batch, " + std::to_string(in_dim) +
                "]");
    require_shape(bias, {out_dim}, "dense bias");
    const std::size_t batch = input.dim(0);
    Tensor out({batch, out_dim});
    const ConstRowMap x(input.data.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_dim));
    const ConstRowMap w(weight.data.data(), static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.data.data(), static_cast<Eigen::Index>(out_dim));
    RowMap o(out.data.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_dim));
    o.noalias() = x * w.transpose();
    o.rowwise() += b;
    return out;
}

ParamGrads dense_backward(const Tensor& upstream, const Tensor& input, const Tensor& weight, bool input_grad) {
    require(weight.rank() == 2 && input.rank() == 2 && input.dim(1) == weight.dim(1),
            "dense backward: cached input shape mismatch");
    const std::size_t batch = input.dim(0);
    const std::size_t out_dim = weight.dim(0);
    const std::size_t in_dim = weight.dim(1);
    require_shape(upstream, {batch, out_dim}, "dense upstream gradient");
    const auto B = static_cast<Eigen::Index>(batch);
    const auto O = static_cast<Eigen::Index>(out_dim);
    const auto I = static_cast<Eigen::Index>(in_dim);

    ParamGrads g{Tensor(input_grad ? input.shape : std::vector<std::size_t>{0}), Tensor(weight.shape),
                 Tensor({out_dim})};
    const ConstRowMap dout(upstream.data.data(), B, O);
    const ConstRowMap x(input.data.data(), B, I);
    const ConstRowMap w(weight.data.data(), O, I);
    if (input_grad) RowMap(g.input.data.data(), B, I).noalias() = dout * w;
    RowMap(g.weight.data.data(), O, I).noalias() = dout.transpose() * x;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < out_dim; ++o) g.bias.data[o] += upstream.data[b * out_dim + o];
    }
    return g;
}

// ---- activation / dropout / loss ---------------------------------------------

Tensor activation_forward(const Tensor& input, Activation function) {
    if (function == Activation::Identity) return input;
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor activation_backward(const Tensor& upstream, const Tensor& input, Activation function) {
    require(upstream.shape == input.shape, "activation backward: shape mismatch");
    if (function == Activation::Identity) return upstream;
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input.data[i] > 0.0)) g.data[i] = 0.0;
    }
    return g;
}

DropoutResult dropout_forward(const Tensor& input, double rate, Mode mode, std::uint64_t seed) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
    if (mode == Mode::Eval || rate == 0.0) {
        Tensor mask(input.shape);
        std::fill(mask.data.begin(), mask.data.end(), 1.0);
        return {input, std::move(mask)};
    }
    Rng rng(seed);
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    DropoutResult r{input, Tensor(input.shape)};
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double m = rng.uniform() < keep ? scale : 0.0;
        r.mask.data[i] = m;
        r.output.data[i] = input.data[i] * m;
    }
    return r;
}

Tensor dropout_backward(const Tensor& upstream, const Tensor& mask) {
    require(upstream.shape == mask.shape, "dropout backward: shape mismatch");
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= mask.data[i];
    return g;
}

LossResult huber_loss(const Tensor& pred, const Tensor& target, double delta) {
    require(delta > 0.0, "Huber delta must be positive");
    require(pred.shape == target.shape, "Huber loss: prediction shape " + shape_string(pred.shape) +
                                            " differs from target shape " + shape_string(target.shape));
    require(pred.size() > 0, "Huber loss of an empty batch");
    const double n = static_cast<double>(pred.size());
    LossResult r{0.0, Tensor(pred.shape)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        const double a = std::abs(d);
        if (a <= delta) {
            r.value += 0.5 * d * d;
            r.grad.data[i] = d / n;
        } else {
            r.value += delta * (a - 0.5 * delta);
            r.grad.data[i] = (d > 0 ? delta : -delta) / n;
        }
    }
    r.value /= n;
    return r;
}

// ---- AdamW -----------------------------------------------------------------

AdamW::AdamW(AdamWConfig cfg, std::span<const Tensor> params) : cfg_(cfg) {
    require(cfg_.lr > 0.0, "learning rate must be positive");
    require(cfg_.weight_decay >= 0.0, "weight decay must be non-negative");
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.push_back(Tensor::zeros_like(p));
        v_.push_back(Tensor::zeros_like(p));
    }
}

bool AdamW::step(std::span<Tensor> params, std::span<const Tensor> grads) {
    require(params.size() == m_.size() && grads.size() == m_.size(), "AdamW: parameter count mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        require(params[p].shape == m_[p].shape && grads[p].shape == m_[p].shape, "AdamW: shape mismatch");
        for (double g : grads[p].data) {
            if (!std::isfinite(g)) {
                ++skipped_;
                return false;
            }
        }
    }
    ++t_;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    const double lr = cfg_.lr;
    const double eps = cfg_.eps;
    for (std::size_t p = 0; p < params.size(); ++p) {
        double* __restrict__ theta = params[p].data.data();
        const double* __restrict__ g = grads[p].data.data();
        double* __restrict__ m = m_[p].data.data();
        double* __restrict__ v = v_[p].data.data();
        const std::size_t n = params[p].size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] = theta[i] * decay - lr * (mhat / (std::sqrt(vhat) + eps));
        }
    }
    return true;
}

// ---- model spec ------------------------------------------------------------

void ModelSpec::validate() const {
    require(input_len >= 1, "model input_len must be at least 1");
    require(!layers.empty(), "model has no layers");
    // Shape is [channels, len] until flattened, then [width].
    std::size_t channels = 1;
    std::size_t len = input_len;
    bool flat = false;
    std::size_t width = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string where = "layer " + std::to_string(i) + ": ";
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, Conv1DSpec>) {
                    require(!flat, where + "convolution after flatten");
                    require(layer.kernel >= 1 && layer.stride >= 1, where + "kernel and stride must be at least 1");
                    require(layer.in_channels == channels, where + "expects " + std::to_string(layer.in_channels) +
                                                               " channels, receives " + std::to_string(channels));
                    require(layer.kernel <= layer.padded_length(len),
                            where + "kernel " + std::to_string(layer.kernel) + " exceeds padded length " +
                                std::to_string(layer.padded_length(len)));
                    len = layer.output_length(len);
                    channels = layer.out_channels;
                } else if constexpr (std::is_same_v<T, DenseSpec>) {
                    require(flat, where + "dense layer needs a flattened input");
                    require(layer.in_dim == width, where + "expects width " + std::to_string(layer.in_dim) +
                                                       ", receives " + std::to_string(width));
                    width = layer.out_dim;
                } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                    require(layer.rate >= 0.0 && layer.rate < 1.0, where + "dropout rate must lie in [0, 1)");
                } else if constexpr (std::is_same_v<T, FlattenSpec>) {
                    if (!flat) width = channels * len;
                    flat = true;
                }
            },
            layers[i]);
    }
    require(flat, "model output must be flattened");
    require(width == output_dim, "model outputs " + std::to_string(width) + " values, expected " +
                                     std::to_string(output_dim));
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) {
        if (const auto* c = std::get_if<Conv1DSpec>(&layer)) {
            total += (c->in_channels * c->kernel + 1) * c->out_channels;
        } else if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            total += (d->in_dim + 1) * d->out_dim;
        }
    }
    return total;
}

std::string model_spec_to_json(const ModelSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : spec.layers) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, Conv1DSpec>) {
                    layers.push_back({{"type", "conv1d"},
                                      {"in_channels", l.in_channels},
                                      {"out_channels", l.out_channels},
                                      {"kernel", l.kernel},
                                      {"stride", l.stride},
                                      {"padding", l.padding == Padding::Same ? "same" : "none"}});
                } else if constexpr (std::is_same_v<T, DenseSpec>) {
                    layers.push_back({{"type", "dense"}, {"in_dim", l.in_dim}, {"out_dim", l.out_dim}});
                } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                    layers.push_back({{"type", "dropout"}, {"rate", l.rate}});
                } else if constexpr (std::is_same_v<T, FlattenSpec>) {
                    layers.push_back({{"type", "flatten"}});
                } else {
                    layers.push_back({{"type", "activation"},
                                      {"function", l.function == Activation::Relu ? "relu" : "identity"}});
                }
            },
            layer);
    }
    const nlohmann::json doc = {
        {"input_len", spec.input_len}, {"output_dim", spec.output_dim}, {"layers", std::move(layers)}};
    return doc.dump(2);
}

ModelSpec model_spec_from_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("model spec is not valid JSON: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec.input_len = doc.at("input_len").get<std::size_t>();
        spec.output_dim = doc.value("output_dim", kTargetCount);
        for (const auto& l : doc.at("layers")) {
            const auto type = l.at("type").get<std::string>();
            if (type == "conv1d") {
                Conv1DSpec c;
                c.in_channels = l.at("in_channels").get<std::size_t>();
                c.out_channels = l.at("out_channels").get<std::size_t>();
                c.kernel = l.at("kernel").get<std::size_t>();
                c.stride = l.value("stride", std::size_t{1});
                const auto pad = l.value("padding", std::string("same"));
                require(pad == "same" || pad == "none", "unknown padding '" + pad + "'");
                c.padding = pad == "same" ? Padding::Same : Padding::None;
                spec.layers.emplace_back(c);
            } else if (type == "dense") {
                spec.layers.emplace_back(
                    DenseSpec{l.at("in_dim").get<std::size_t>(), l.at("out_dim").get<std::size_t>()});
            } else if (type == "dropout") {
                spec.layers.emplace_back(DropoutSpec{l.at("rate").get<double>()});
            } else if (type == "flatten") {
                spec.layers.emplace_back(FlattenSpec{});
            } else if (type == "activation") {
                const auto fn = l.at("function").get<std::string>();
                require(fn == "relu" || fn == "identity", "unknown activation '" + fn + "'");
                spec.layers.emplace_back(ActivationSpec{fn == "relu" ? Activation::Relu : Activation::Identity});
            } else {
                throw ValidationError("unknown layer type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

ModelSpec build_fishcnn(std::size_t input_len, std::size_t kernel, std::size_t filters, double dropout,
                        std::size_t output_dim) {
    require(input_len >= kernel, "input_len " + std::to_string(input_len) + " is shorter than the kernel " +
                                     std::to_string(kernel));
    ModelSpec spec;
    spec.input_len = input_len;
    spec.output_dim = output_dim;
    spec.layers = {
        Conv1DSpec{1, filters, kernel, 1, Padding::Same},
        ActivationSpec{Activation::Relu},
        Conv1DSpec{filters, filters, kernel, 1, Padding::Same},
        ActivationSpec{Activation::Relu},
        FlattenSpec{},
        DropoutSpec{dropout},
        DenseSpec{filters * input_len, 128},
        ActivationSpec{Activation::Relu},
        DenseSpec{128, 16},
        ActivationSpec{Activation::Relu},
        DenseSpec{16, output_dim},
        ActivationSpec{Activation::Identity},
    };
    spec.validate();
    return spec;
}

std::size_t receptive_field(const ModelSpec& spec) {
    std::size_t field = 1;
    std::size_t jump = 1;
    for (const auto& layer : spec.layers) {
        if (const auto* c = std::get_if<Conv1DSpec>(&layer)) {
            field += (c->kernel - 1) * jump;
            jump *= c->stride;
        } else if (std::holds_alternative<FlattenSpec>(layer) || std::holds_alternative<DenseSpec>(layer)) {
            break;
        }
    }
    return field;
}

// ---- network ---------------------------------------------------------------

void ModelState::zero_grad() {
    for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
}

ModelState init_state(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelState state;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        std::vector<std::size_t> wshape;
        std::size_t fan_in = 0;
        std::size_t out = 0;
        if (const auto* c = std::get_if<Conv1DSpec>(&spec.layers[i])) {
            wshape = {c->out_channels, c->in_channels, c->kernel};
            fan_in = c->in_channels * c->kernel;
            out = c->out_channels;
        } else if (const auto* d = std::get_if<DenseSpec>(&spec.layers[i])) {
            wshape = {d->out_dim, d->in_dim};
            fan_in = d->in_dim;
            out = d->out_dim;
        } else {
            continue;
        }
        Rng rng(derive_seed(seed, "init", {i}));
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor w(wshape);
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        state.params.push_back(std::move(w));
        state.params.emplace_back(std::vector<std::size_t>{out});
    }
    for (const auto& p : state.params) state.grads.push_back(Tensor::zeros_like(p));
    return state;
}

Network::Network(ModelSpec spec, ModelState state) : spec_(std::move(spec)), state_(std::move(state)) {
    spec_.validate();
    std::size_t next = 0;
    for (const auto& layer : spec_.layers) {
        param_offset_.push_back(next);
        if (std::holds_alternative<Conv1DSpec>(layer) || std::holds_alternative<DenseSpec>(layer)) next += 2;
    }
    require(state_.params.size() == next, "model state has " + std::to_string(state_.params.size()) +
                                              " parameter tensors, expected " + std::to_string(next));
    if (state_.grads.size() != next) {
        state_.grads.clear();
        for (const auto& p : state_.params) state_.grads.push_back(Tensor::zeros_like(p));
    }
    cache_.resize(spec_.layers.size());
}

Network::Network(ModelSpec spec, std::uint64_t init_seed) : Network(spec, init_state(spec, init_seed)) {}

Tensor Network::forward(const Tensor& input, Mode mode, std::uint64_t dropout_seed) {
    Tensor x;
    if (input.rank() == 2) {
        require(input.dim(1) == spec_.input_len, "network input width " + std::to_string(input.dim(1)) +
                                                     " differs from model input_len " +
                                                     std::to_string(spec_.input_len));
        x = Tensor({input.dim(0), 1, input.dim(1)}, input.data);
    } else {
        require(input.rank() == 3 && input.dim(1) == 1 && input.dim(2) == spec_.input_len,
                "network input has shape " + shape_string(input.shape) + ", expected [batch, " +
                    std::to_string(spec_.input_len) + "]");
        x = input;
    }
    input_shape_ = input.shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        auto& cache = cache_[i];
        const std::size_t p = param_offset_[i];
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, Conv1DSpec>) {
                    Tensor y = conv1d_forward(x, layer, state_.params[p], state_.params[p + 1]);
                    cache.input = std::move(x);
                    x = std::move(y);
                } else if constexpr (std::is_same_v<T, DenseSpec>) {
                    Tensor y = dense_forward(x, state_.params[p], state_.params[p + 1]);
                    cache.input = std::move(x);
                    x = std::move(y);
                } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                    auto r = dropout_forward(x, layer.rate, mode, derive_seed(dropout_seed, "dropout", {i}));
                    cache.mask = std::move(r.mask);
                    x = std::move(r.output);
                } else if constexpr (std::is_same_v<T, FlattenSpec>) {
                    cache.shape = x.shape;
                    const std::size_t b = x.dim(0);
                    x.shape = {b, x.size() / std::max<std::size_t>(b, 1)};
                } else {
                    Tensor y = activation_forward(x, layer.function);
                    cache.input = std::move(x);
                    x = std::move(y);
                }
            },
            spec_.layers[i]);
    }
    return x;
}

Tensor Network::backward(const Tensor& upstream, bool input_grad) {
    Tensor g = upstream;
    for (std::size_t i = spec_.layers.size(); i-- > 0;) {
        auto& cache = cache_[i];
        const std::size_t p = param_offset_[i];
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, Conv1DSpec>) {
                    auto r = conv1d_backward(g, cache.input, layer, state_.params[p], ConvAlgorithm::Auto,
                                             input_grad || i > 0);
                    state_.grads[p] = std::move(r.weight);
                    state_.grads[p + 1] = std::move(r.bias);
                    g = std::move(r.input);
                } else if constexpr (std::is_same_v<T, DenseSpec>) {
                    auto r = dense_backward(g, cache.input, state_.params[p], input_grad || i > 0);
                    state_.grads[p] = std::move(r.weight);
                    state_.grads[p + 1] = std::move(r.bias);
                    g = std::move(r.input);
                } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                    g = dropout_backward(g, cache.mask);
                } else if constexpr (std::is_same_v<T, FlattenSpec>) {
                    g.shape = cache.shape;
                } else {
                    g = activation_backward(g, cache.input, layer.function);
                }
            },
            spec_.layers[i]);
    }
    if (!input_grad) return Tensor({0});
    g.shape = input_shape_;
    return g;
}

}  // namespace spectral_forge::nn
