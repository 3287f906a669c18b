#pragma once

#include "spectral_forge/nn.hpp"

namespace spectral_forge::nn::detail {

/// Frequency-domain convolution for stride 1. Shapes are checked by the caller.
Tensor fft_conv_forward(const Tensor& input, const Conv1DSpec& spec, const Tensor& weight, const Tensor& bias,
                        std::size_t left, std::size_t padded_len, std::size_t out_len);

ParamGrads fft_conv_backward(const Tensor& upstream, const Tensor& input, const Conv1DSpec& spec, const Tensor& weight,
                             std::size_t left, std::size_t padded_len, std::size_t out_len, bool input_grad);

/// Smallest n >= len whose prime factors are all 2, 3 or 5.
std::size_t fft_size(std::size_t len);

}  // namespace spectral_forge::nn::detail
