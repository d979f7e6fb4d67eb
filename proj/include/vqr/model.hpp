#pragma once

// The full network: question and program encoders, joint projection, one
// attention pipeline over detection rows and one over spatial grid cells,
// concat fusion, and an MLP softmax classifier. Plus versioned JSON
// checkpoints.

#include <map>
#include <string>
#include <vector>

#include "vqr/nn.hpp"
#include "vqr/world.hpp"

namespace vqr::model {

using ad::Index;
using nn::RunMode;

enum class EncoderKind { gru, bayesian_gru };
const std::string& encoder_name(EncoderKind k);
EncoderKind encoder_from_name(const std::string& s);

struct ModelConfig {
  Index embed_dim = 32;    // E
  Index hidden_dim = 64;   // H, per encoder
  Index joint_dim = 64;    // Q, projected question+program state
  Index attn_dim = 64;     // A
  Index det_dim = 64;      // D, detection feature width before widening
  Index grid = 7;          // G
  Index cell_dim = 32;     // C
  Index classes = 24;      // K, answer vocabulary size
  Index mlp_hidden = 128;
  bool use_spatial = true;
  bool use_bbox_position = false;
  bool use_bbox_size = false;
  bool use_program = true;
  EncoderKind encoder = EncoderKind::gru;
  double dropout_rate = 0.25;   // locked-dropout rate of the bayesian encoder
  double mlp_dropout = 0.25;    // classifier hidden-layer dropout (train mode)
  std::uint64_t seed = 0;

  /// detection row width after bbox widening
  Index det_input_dim() const {
    return det_dim + (use_bbox_position ? 2 : 0) + (use_bbox_size ? 2 : 0);
  }
  /// classifier input: two pooled detection readouts + pooled spatial cells
  /// + joint. Detection attention runs twice with independent parameters so
  /// the classifier can compare two attended objects.
  Index classifier_input_dim() const {
    return 2 * det_input_dim() + (use_spatial ? cell_dim : 0) + joint_dim;
  }
  world::FeatureFlags feature_flags() const;
};

/// Named parameter tensors. Each tensor is initialized from a sub-seed of
/// (config seed, tensor name), so toggling a flag changes only the tensors
/// that flag governs.
struct Params {
  std::map<std::string, Tensor> tensors;

  static Params init(const ModelConfig& cfg);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void zero_grads();
  Params clone() const;
};

/// Expected tensor shapes for a config; the checkpoint loader validates
/// against this.
std::map<std::string, ad::Shape> expected_shapes(const ModelConfig& cfg);

struct QuestionEncoding {
  Tensor question_state;  // H
  Tensor program_state;   // H (zeros when the program channel is off)
  Tensor joint;           // Q
};

/// Instrumentation hooks for the locked-dropout masks used during encoding.
struct EncodeTrace {
  std::vector<nn::LockedMasks> question_masks;
  std::vector<nn::LockedMasks> program_masks;
};

QuestionEncoding encode(Tape& tape, const std::vector<int>& question_ids,
                        const std::vector<int>& program_ids, const ModelConfig& cfg, Params& params,
                        RunMode mode, Rng& rng, EncodeTrace* trace = nullptr);

/// Class logits (rank-1, length K). Train mode applies classifier dropout.
Tensor forward_logits(Tape& tape, const world::FeatureBundle& bundle, const QuestionEncoding& enc,
                      const ModelConfig& cfg, Params& params, RunMode mode, Rng& rng);
/// Softmax class probabilities (rank-1, length K).
Tensor forward(Tape& tape, const world::FeatureBundle& bundle, const QuestionEncoding& enc,
               const ModelConfig& cfg, Params& params, RunMode mode, Rng& rng);

void save_checkpoint(const Params& params, const ModelConfig& cfg, const std::string& path);
struct Checkpoint {
  Params params;
  ModelConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vqr::model
