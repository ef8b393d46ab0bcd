// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deepkd/distill.hpp"
#include "deepkd/numkit.hpp"

namespace deepkd {

enum class Activation { kRelu, kIdentity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully connected network: dims = [in, hidden..., out]. weights[l] has shape
// dims[l+1] x dims[l]; hidden layers apply the activation, the output layer
// is identity (raw logits). Parameters flatten layer by layer, each layer's
// weight matrix row-major followed by its bias vector.
struct MlpModel {
  std::vector<std::size_t> dims;
  std::vector<Mat64> weights;
  std::vector<Vec64> biases;
  Activation act = Activation::kRelu;

  static MlpModel zeros(std::vector<std::size_t> dims,
                        Activation act = Activation::kRelu);
  // Weights ~ N(0, 2/fan_in), biases zero, drawn in flatten order.
  static MlpModel he_init(std::vector<std::size_t> dims, Rng& rng,
                          Activation act = Activation::kRelu);

  std::size_t num_layers() const { return weights.size(); }
  std::size_t in_dim() const { return dims.front(); }
  std::size_t out_dim() const { return dims.back(); }
  std::size_t param_count() const;

  Vec64 flatten_params() const;
  void set_params(std::span<const double> flat);
  void add_delta(std::span<const double> delta);
};

// Intermediate values kept by the forward pass for backpropagation.
// act[0] is the input batch; pre[l] and act[l+1] belong to layer l.
struct ForwardTape {
  std::vector<Mat64> pre;
  std::vector<Mat64> act;
};

// Logits for a batch (inputs NxD -> NxC). Pass a tape to retain
// intermediates for a backward pass.
Mat64 forward(const MlpModel& model, const Mat64& inputs, ForwardTape* tape = nullptr);

// Flattened parameter gradient for dLoss/dlogits supplied per sample
// (dlogits is NxC), averaged over the batch. ReLU uses subgradient 0 at 0.
// Linear in dlogits.
Vec64 backward_from_logit_grad(const MlpModel& model, const ForwardTape& tape,
                               const Mat64& dlogits);

// Per-stream flattened parameter gradients.
struct ParamGradTriple {
  Vec64 tog;
  Vec64 tcg;
  Vec64 ncg;
};

// Loss weights applied to the logit-gradient streams before backpropagation:
// task stream * alpha, target-class stream * w_tcg, non-target stream *
// w_ncg (callers pass tau^2-scaled KL weights here).
struct StreamWeights {
  double tog = 1.0;
  double tcg = 1.0;
  double ncg = 1.0;
};

// Runs one backward pass per stream over the shared tape. The three results
// sum to the backward pass of the summed weighted logit gradients (up to
// rounding).
ParamGradTriple param_grad_triple(const MlpModel& model, const ForwardTape& tape,
                                  std::span<const LogitGradTriple> samples,
                                  const StreamWeights& w);

// JSON round trip with 17-significant-digit numbers: save -> load -> save is
// byte-identical. load validates shapes and rejects non-finite values.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace deepkd
