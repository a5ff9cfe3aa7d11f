#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gapfill/frame.hpp"
#include "gapfill/masking.hpp"
#include "gapfill/pipeline.hpp"
#include "gapfill/tensor.hpp"

namespace gapfill {

struct ImputerConfig {
  std::size_t d_model = 16;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 18;
  std::size_t n_layers = 1;
  std::size_t window_len = 120;  // T, time steps per segment
  std::size_t n_channels = 10;   // C
  double learning_rate = 1e-3;
  std::size_t epochs = 400;
  std::size_t batch_size = 32;
  // Fresh training masks are drawn every epoch with this ratio and gap
  // length range (steps).
  double train_mask_ratio = 0.2;
  std::size_t train_gap_min = 1;
  std::size_t train_gap_max = 60;

  void validate() const;  // d_model % n_heads == 0, positive dims, ...
  std::string canonical_json() const;
  std::uint64_t hash() const;
};

struct TrainResult {
  std::vector<double> train_loss;  // one entry per epoch, per-masked-cell MSE
  std::vector<double> val_loss;    // empty when no validation segments given
};

/// Encoder-only masked-reconstruction model over C x T segments. Masked
/// cells are zero-filled and flagged through C indicator channels, so the
/// input projection maps 2C -> d_model; each encoder layer is
/// X1 = X + MHSA(X), X2 = X1 + BatchNorm(FFN(X1)); a d_model -> C affine
/// head emits the reconstruction. Loss is MSE over masked cells only.
class TransformerImputer {
 public:
  TransformerImputer(ImputerConfig cfg, std::uint64_t seed);

  const ImputerConfig& config() const { return cfg_; }

  /// Eval-mode reconstruction of one segment (C x T, channel-major). Missing
  /// cells come back filled; observed positions are reconstructed too but
  /// callers must not write them back.
  std::vector<double> forward(const TimeSeriesFrame& segment) const;

  /// Trains on standardized, label-free segments of length window_len.
  /// Fresh masks per epoch, Adam, deterministic for a fixed seed. Throws
  /// with a diagnostic checkpoint path if the loss diverges.
  TrainResult train(const std::vector<TimeSeriesFrame>& segments,
                    const std::vector<TimeSeriesFrame>& val_segments, std::uint64_t seed);

  /// Builds the full training loss graph (masked-cell MSE) for the given
  /// segments under fixed mask plans, one plan per segment. Returned scalar
  /// is differentiable, so callers can backprop it and inspect parameter
  /// gradients. Every plan cell must cover an observed cell.
  Tensor training_loss(const std::vector<TimeSeriesFrame>& segments,
                       const std::vector<MaskPlan>& plans, bool training) const;

  /// Fills every missing cell of the frame using a minimal set of
  /// window_len-wide model windows (overlapping fills averaged). When
  /// standardization stats are attached the frame is taken raw: it is
  /// standardized on the way in and de-standardized on the way out.
  TimeSeriesFrame impute(const TimeSeriesFrame& frame) const;

  std::size_t count_parameters() const;
  static std::size_t analytic_parameter_count(const ImputerConfig& cfg);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  /// Channel stats captured at training time so impute() is self-contained.
  void set_stats(ChannelStats stats) { stats_ = std::move(stats); }
  const std::optional<ChannelStats>& stats() const { return stats_; }

  void save(const std::filesystem::path& path) const;
  static TransformerImputer load(const std::filesystem::path& path);

  /// Where a divergence diagnostic checkpoint gets written (default: a
  /// temp-directory path).
  void set_diagnostic_path(std::filesystem::path p) { diagnostic_path_ = std::move(p); }

 private:
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor bn_gamma, bn_beta;
    mutable BatchNormState bn_state;
  };

  struct BatchTensors {
    Tensor input;   // [B*T x 2C]
    Tensor target;  // [B*T x C], zeros off the loss cells
    Tensor weight;  // [B*T x C], 1 at loss cells
    std::size_t n_segments = 0;
    std::size_t n_loss_cells = 0;
  };

  BatchTensors assemble(const std::vector<const TimeSeriesFrame*>& segments,
                        const std::vector<std::vector<std::uint8_t>>* loss_masks) const;
  Tensor encode(const Tensor& input, std::size_t n_segments, bool training) const;
  Tensor attention(const Layer& layer, const Tensor& x) const;

  ImputerConfig cfg_;
  Tensor w_in_, b_in_, pos_, w_out_, b_out_;
  std::vector<Layer> layers_;
  std::optional<ChannelStats> stats_;
  std::filesystem::path diagnostic_path_;
};

}  // namespace gapfill
