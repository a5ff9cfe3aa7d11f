#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gapfill/baselines.hpp"
#include "gapfill/frame.hpp"
#include "gapfill/imputer.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

struct ClassifierConfig {
  std::size_t patch_size = 16;  // P
  std::size_t depth = 8;        // D encoder blocks
  std::size_t n_heads = 4;      // H
  std::size_t d_emb = 64;
  std::size_t d_attn = 64;  // per-head width; attention inner width is H*d_attn
  std::size_t d_mlp = 128;
  double p_emb = 0.4;
  double p_attn = 0.4;
  double p_mlp = 0.4;
  std::size_t n_classes = 0;
  std::size_t n_channels = 0;
  std::size_t window_len = 0;  // W, must be a multiple of patch_size
  bool mean_pool = false;      // default: learnable class token

  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::size_t patience = 10;  // early stopping on fold validation accuracy

  std::size_t n_patches() const { return window_len / patch_size; }
  std::size_t patch_dim() const { return n_channels * patch_size; }
  void validate() const;
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

/// Per-channel z-score within the window; a (near-)constant channel becomes
/// all zeros.
std::vector<double> instance_normalize(std::span<const double> window, std::size_t n_channels,
                                       std::size_t window_len);

/// C x W window -> (W/P) x (C*P) patch matrix. Within a patch the layout is
/// time-major, channel-minor: element t_local*C + c.
std::vector<double> patchify(std::span<const double> window, std::size_t n_channels,
                             std::size_t window_len, std::size_t patch_size);
std::vector<double> unpatchify(std::span<const double> patches, std::size_t n_channels,
                               std::size_t window_len, std::size_t patch_size);

struct FoldResult {
  std::string held_out_subject;
  double accuracy = 0.0;               // best validation accuracy of the fold
  std::vector<std::size_t> confusion;  // n_classes x n_classes, row truth, col prediction
};

/// ViT-style classifier over labeled windows: instance norm -> patchify ->
/// linear embedding -> class token + learnable positions -> pre-norm encoder
/// blocks -> single-layer head -> softmax.
class PatchClassifier {
 public:
  PatchClassifier(ClassifierConfig cfg, std::uint64_t seed);

  const ClassifierConfig& config() const { return cfg_; }

  /// Eval-mode class distribution (sums to 1).
  std::vector<double> class_probabilities(const LabeledWindow& window) const;
  int predict(const LabeledWindow& window) const;
  double evaluate_accuracy(const std::vector<LabeledWindow>& windows) const;

  struct EpochLog {
    std::vector<double> train_loss;
    std::vector<double> val_accuracy;
  };

  /// In-place training with early stopping on validation accuracy; the best
  /// weights are restored before returning.
  EpochLog train(const std::vector<LabeledWindow>& train_windows,
                 const std::vector<LabeledWindow>& val_windows, std::uint64_t seed);

  std::size_t count_parameters() const;
  static std::size_t analytic_parameter_count(const ClassifierConfig& cfg);
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  void save(const std::filesystem::path& path) const;
  static PatchClassifier load(const std::filesystem::path& path);

 private:
  struct Block {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, wk, wv;  // [d_emb x H*d_attn], no biases
    Tensor wo, bo;      // [H*d_attn x d_emb] + bias
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  };

  Tensor forward_logits(std::span<const double> window_values, bool training, Rng* rng) const;
  std::vector<double> snapshot_parameters() const;
  void restore_parameters(std::span<const double> flat);

  ClassifierConfig cfg_;
  Tensor patch_embed_w_, patch_embed_b_;
  Tensor cls_token_;  // absent when mean_pool
  Tensor pos_embed_;
  std::vector<Block> blocks_;
  Tensor final_ln_gamma_, final_ln_beta_;
  Tensor head_w_, head_b_;
};

struct LosoOutcome {
  std::vector<FoldResult> folds;
  PatchClassifier selected;  // weights of the best-validation-accuracy fold
  double mean_accuracy = 0.0;
};

/// One fold per training subject; fold training never sees the held-out
/// subject. Needs >= 2 subjects.
LosoOutcome train_loso(const std::vector<LabeledWindow>& windows, const ClassifierConfig& cfg,
                       std::uint64_t seed);

/// Masks each window at `missing_rate`, fills it with the named strategy
/// ("none" = zero-fill, "mean", "linear", or "transformer" via `imputer`),
/// classifies, and returns accuracy. Rate 0 skips masking entirely.
double evaluate_with_imputation(const PatchClassifier& clf,
                                const std::vector<LabeledWindow>& windows,
                                const std::string& strategy, const TransformerImputer* imputer,
                                double missing_rate, std::uint64_t seed,
                                std::pair<std::size_t, std::size_t> gap_length_range = {1, 32});

}  // namespace gapfill
