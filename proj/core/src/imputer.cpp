#include "gapfill/imputer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "gapfill/adam.hpp"
#include "gapfill/checkpoint.hpp"
#include "gapfill/masking.hpp"
#include "gapfill/version.hpp"

namespace gapfill {

using nlohmann::json;

void ImputerConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || ffn_hidden == 0 || n_layers == 0)
    throw std::invalid_argument("imputer config: model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("imputer config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  if (window_len < 1 || n_channels < 1)
    throw std::invalid_argument("imputer config: window_len and n_channels must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("imputer config: learning rate must be > 0");
  if (epochs == 0 || batch_size == 0)
    throw std::invalid_argument("imputer config: epochs and batch size must be >= 1");
  if (!(train_mask_ratio > 0.0 && train_mask_ratio < 1.0))
    throw std::invalid_argument("imputer config: train_mask_ratio must lie in (0, 1)");
  if (train_gap_min < 1 || train_gap_min > train_gap_max || train_gap_max > window_len)
    throw std::invalid_argument(
        "imputer config: need 1 <= train_gap_min <= train_gap_max <= window_len");
}

std::string ImputerConfig::canonical_json() const {
  json j;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["ffn_hidden"] = ffn_hidden;
  j["n_layers"] = n_layers;
  j["window_len"] = window_len;
  j["n_channels"] = n_channels;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["train_mask_ratio"] = train_mask_ratio;
  j["train_gap_min"] = train_gap_min;
  j["train_gap_max"] = train_gap_max;
  return j.dump();
}

std::uint64_t ImputerConfig::hash() const { return fnv1a_hash(canonical_json()); }

namespace {

ImputerConfig config_from_json(const json& j) {
  ImputerConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.window_len = j.at("window_len").get<std::size_t>();
  c.n_channels = j.at("n_channels").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.train_mask_ratio = j.at("train_mask_ratio").get<double>();
  c.train_gap_min = j.at("train_gap_min").get<std::size_t>();
  c.train_gap_max = j.at("train_gap_max").get<std::size_t>();
  return c;
}

void check_segment(const TimeSeriesFrame& seg, const ImputerConfig& cfg, const char* who) {
  if (seg.n_channels() != cfg.n_channels || seg.n_steps != cfg.window_len)
    throw std::invalid_argument(std::string(who) + ": segment is " +
                                std::to_string(seg.n_channels()) + "x" +
                                std::to_string(seg.n_steps) + " but the model expects " +
                                std::to_string(cfg.n_channels) + "x" +
                                std::to_string(cfg.window_len));
}

}  // namespace

TransformerImputer::TransformerImputer(ImputerConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.d_model, c = cfg_.n_channels, t = cfg_.window_len,
                    f = cfg_.ffn_hidden;

  w_in_ = Tensor::randn({2 * c, d}, rng, std::sqrt(1.0 / static_cast<double>(2 * c)), true);
  b_in_ = Tensor::zeros({d}, true);
  pos_ = Tensor::randn({t, d}, rng, 0.02, true);

  const double wd = std::sqrt(1.0 / static_cast<double>(d));
  layers_.resize(cfg_.n_layers);
  for (Layer& layer : layers_) {
    layer.wq = Tensor::randn({d, d}, rng, wd, true);
    layer.bq = Tensor::zeros({d}, true);
    layer.wk = Tensor::randn({d, d}, rng, wd, true);
    layer.bk = Tensor::zeros({d}, true);
    layer.wv = Tensor::randn({d, d}, rng, wd, true);
    layer.bv = Tensor::zeros({d}, true);
    layer.wo = Tensor::randn({d, d}, rng, wd, true);
    layer.bo = Tensor::zeros({d}, true);
    layer.ffn_w1 = Tensor::randn({d, f}, rng, wd, true);
    layer.ffn_b1 = Tensor::zeros({f}, true);
    layer.ffn_w2 = Tensor::randn({f, d}, rng, std::sqrt(1.0 / static_cast<double>(f)), true);
    layer.ffn_b2 = Tensor::zeros({d}, true);
    layer.bn_gamma = Tensor::full({d}, 1.0, true);
    layer.bn_beta = Tensor::zeros({d}, true);
    layer.bn_state.running_mean.assign(d, 0.0);
    layer.bn_state.running_var.assign(d, 1.0);
  }

  w_out_ = Tensor::randn({d, c}, rng, wd, true);
  b_out_ = Tensor::zeros({c}, true);

  for (auto& [name, tensor] : named_parameters()) tensor.set_name(name);

  diagnostic_path_ =
      std::filesystem::temp_directory_path() / "gapfill_imputer_diverged.ckpt";
}

std::vector<std::pair<std::string, Tensor>> TransformerImputer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("in_proj.weight", w_in_);
  out.emplace_back("in_proj.bias", b_in_);
  out.emplace_back("pos", pos_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const Layer& l = layers_[i];
    out.emplace_back(p + "attn.wq.weight", l.wq);
    out.emplace_back(p + "attn.wq.bias", l.bq);
    out.emplace_back(p + "attn.wk.weight", l.wk);
    out.emplace_back(p + "attn.wk.bias", l.bk);
    out.emplace_back(p + "attn.wv.weight", l.wv);
    out.emplace_back(p + "attn.wv.bias", l.bv);
    out.emplace_back(p + "attn.wo.weight", l.wo);
    out.emplace_back(p + "attn.wo.bias", l.bo);
    out.emplace_back(p + "ffn.w1.weight", l.ffn_w1);
    out.emplace_back(p + "ffn.w1.bias", l.ffn_b1);
    out.emplace_back(p + "ffn.w2.weight", l.ffn_w2);
    out.emplace_back(p + "ffn.w2.bias", l.ffn_b2);
    out.emplace_back(p + "bn.gamma", l.bn_gamma);
    out.emplace_back(p + "bn.beta", l.bn_beta);
  }
  out.emplace_back("out_proj.weight", w_out_);
  out.emplace_back("out_proj.bias", b_out_);
  return out;
}

std::size_t TransformerImputer::count_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : named_parameters()) n += tensor.numel();
  return n;
}

std::size_t TransformerImputer::analytic_parameter_count(const ImputerConfig& cfg) {
  const std::size_t d = cfg.d_model, c = cfg.n_channels, t = cfg.window_len, f = cfg.ffn_hidden;
  const std::size_t in_proj = 2 * c * d + d;
  const std::size_t pos = t * d;
  const std::size_t qkvo = 4 * (d * d + d);
  const std::size_t ffn = (d * f + f) + (f * d + d);
  const std::size_t norm = 2 * d;
  const std::size_t out_proj = d * c + c;
  return in_proj + pos + cfg.n_layers * (qkvo + ffn + norm) + out_proj;
}

TransformerImputer::BatchTensors TransformerImputer::assemble(
    const std::vector<const TimeSeriesFrame*>& segments,
    const std::vector<std::vector<std::uint8_t>>* loss_masks) const {
  const std::size_t b = segments.size(), t = cfg_.window_len, c = cfg_.n_channels;
  BatchTensors out;
  out.n_segments = b;

  std::vector<double> input(b * t * 2 * c, 0.0);
  std::vector<double> target(b * t * c, 0.0);
  std::vector<double> weight(b * t * c, 0.0);

  for (std::size_t s = 0; s < b; ++s) {
    const TimeSeriesFrame& seg = *segments[s];
    check_segment(seg, cfg_, "imputer");
    const std::vector<std::uint8_t>* lm = loss_masks ? &(*loss_masks)[s] : nullptr;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t ts = 0; ts < t; ++ts) {
        const std::size_t row = s * t + ts;
        const bool observed = seg.is_observed(ch, ts);
        const bool hidden_for_loss = lm && (*lm)[ch * t + ts] != 0;
        // The model's input hides both natively missing cells and cells the
        // trainer hid on purpose; only the latter carry loss.
        const bool visible = observed && !hidden_for_loss;
        input[row * 2 * c + ch] = visible ? seg.raw(ch, ts) : 0.0;
        input[row * 2 * c + c + ch] = visible ? 0.0 : 1.0;
        if (hidden_for_loss) {
          if (!observed)
            throw std::logic_error("imputer: loss mask covers an unobserved cell");
          target[row * c + ch] = seg.raw(ch, ts);
          weight[row * c + ch] = 1.0;
          ++out.n_loss_cells;
        }
      }
    }
  }

  out.input = Tensor({b * t, 2 * c}, std::move(input));
  out.target = Tensor({b * t, c}, std::move(target));
  out.weight = Tensor({b * t, c}, std::move(weight));
  return out;
}

Tensor TransformerImputer::attention(const Layer& layer, const Tensor& x) const {
  const std::size_t d = cfg_.d_model, h = cfg_.n_heads, dk = d / h;
  const Tensor q = affine(x, layer.wq, layer.bq);
  const Tensor k = affine(x, layer.wk, layer.bk);
  const Tensor v = affine(x, layer.wv, layer.bv);
  std::vector<Tensor> heads;
  heads.reserve(h);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t i = 0; i < h; ++i) {
    const Tensor qi = slice(q, 1, i * dk, (i + 1) * dk);
    const Tensor ki = slice(k, 1, i * dk, (i + 1) * dk);
    const Tensor vi = slice(v, 1, i * dk, (i + 1) * dk);
    const Tensor scores = scale(matmul(qi, transpose(ki)), inv_sqrt_dk);
    const Tensor weights = softmax(scores, 1);
    heads.push_back(matmul(weights, vi));
  }
  const Tensor merged = concat(heads, 1);
  return affine(merged, layer.wo, layer.bo);
}

Tensor TransformerImputer::encode(const Tensor& input, std::size_t n_segments,
                                  bool training) const {
  const std::size_t t = cfg_.window_len;
  Tensor current = affine(input, w_in_, b_in_);
  if (n_segments == 1) {
    current = add(current, pos_);
  } else {
    std::vector<Tensor> tiles(n_segments, pos_);
    current = add(current, concat(tiles, 0));
  }

  for (const Layer& layer : layers_) {
    Tensor x1;
    if (n_segments == 1) {
      x1 = add(current, attention(layer, current));
    } else {
      // Attention never crosses segment boundaries; batch-norm below spans
      // all segments' rows at once.
      std::vector<Tensor> parts;
      parts.reserve(n_segments);
      for (std::size_t s = 0; s < n_segments; ++s) {
        const Tensor xs = slice(current, 0, s * t, (s + 1) * t);
        parts.push_back(add(xs, attention(layer, xs)));
      }
      x1 = concat(parts, 0);
    }
    const Tensor ffn = affine(gelu(affine(x1, layer.ffn_w1, layer.ffn_b1)), layer.ffn_w2,
                              layer.ffn_b2);
    const Tensor normed = batch_norm(ffn, layer.bn_gamma, layer.bn_beta, layer.bn_state, training);
    current = add(x1, normed);
  }
  return affine(current, w_out_, b_out_);
}

std::vector<double> TransformerImputer::forward(const TimeSeriesFrame& segment) const {
  check_segment(segment, cfg_, "imputer forward");
  const BatchTensors bt = assemble({&segment}, nullptr);
  const Tensor pred = encode(bt.input, 1, false);
  const std::size_t t = cfg_.window_len, c = cfg_.n_channels;
  std::vector<double> out(c * t);
  const auto pv = pred.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ts = 0; ts < t; ++ts) out[ch * t + ts] = pv[ts * c + ch];
  return out;
}

Tensor TransformerImputer::training_loss(const std::vector<TimeSeriesFrame>& segments,
                                         const std::vector<MaskPlan>& plans,
                                         bool training) const {
  if (segments.empty()) throw std::invalid_argument("imputer loss: no segments");
  if (plans.size() != segments.size())
    throw std::invalid_argument("imputer loss: need one mask plan per segment");
  const std::size_t t = cfg_.window_len, c = cfg_.n_channels;
  std::vector<const TimeSeriesFrame*> ptrs;
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    check_segment(segments[i], cfg_, "imputer loss");
    ptrs.push_back(&segments[i]);
    std::vector<std::uint8_t> grid(c * t, 0);
    for (const auto& [ch, ts] : plans[i].cells()) {
      if (ch >= c || ts >= t)
        throw std::invalid_argument("imputer loss: mask plan cell out of range");
      grid[ch * t + ts] = 1;
    }
    masks.push_back(std::move(grid));
  }
  const BatchTensors bt = assemble(ptrs, &masks);
  if (bt.n_loss_cells == 0)
    throw std::invalid_argument("imputer loss: mask plans cover no cells");
  const Tensor pred = encode(bt.input, bt.n_segments, training);
  const Tensor diff = mul(sub(pred, bt.target), bt.weight);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(bt.n_loss_cells));
}

TrainResult TransformerImputer::train(const std::vector<TimeSeriesFrame>& segments,
                                      const std::vector<TimeSeriesFrame>& val_segments,
                                      std::uint64_t seed) {
  if (segments.empty()) throw std::invalid_argument("imputer train: no segments");
  for (const auto& s : segments) check_segment(s, cfg_, "imputer train");
  for (const auto& s : val_segments) check_segment(s, cfg_, "imputer train (val)");

  const std::size_t t = cfg_.window_len, c = cfg_.n_channels;
  Rng rng(seed);

  std::vector<Tensor> params;
  for (auto& [name, tensor] : named_parameters()) params.push_back(tensor);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg_.learning_rate;
  AdamOptimizer opt(params, adam_cfg);

  auto plan_to_grid = [&](const MaskPlan& plan) {
    std::vector<std::uint8_t> grid(c * t, 0);
    for (const auto& [ch, ts] : plan.cells()) grid[ch * t + ts] = 1;
    return grid;
  };

  // Validation masks are fixed up front so the curve tracks model quality
  // rather than mask luck.
  std::vector<std::vector<std::uint8_t>> val_masks;
  for (const auto& seg : val_segments)
    val_masks.push_back(plan_to_grid(mask_by_ratio(
        seg, cfg_.train_mask_ratio, {cfg_.train_gap_min, cfg_.train_gap_max}, rng.next())));

  auto diverged = [&](std::size_t epoch, const char* what) {
    Checkpoint snap;
    snap.engine_version = kVersion;
    snap.config_hash = cfg_.hash();
    snap.metadata = "{\"diverged_at_epoch\":" + std::to_string(epoch) + "}";
    for (const auto& [name, tensor] : named_parameters()) snap.add(name, tensor);
    std::string where = diagnostic_path_.string();
    try {
      save_checkpoint(snap, diagnostic_path_);
    } catch (const std::exception&) {
      where = "(diagnostic checkpoint could not be written)";
    }
    throw std::runtime_error("imputer training diverged (" + std::string(what) + ") at epoch " +
                             std::to_string(epoch) + "; parameters dumped to " + where);
  };

  TrainResult result;
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    // Fisher-Yates with the training RNG keeps the whole trajectory a pure
    // function of (data, config, seed).
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.bounded(i)]);

    double sse = 0.0;
    std::size_t cells = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg_.batch_size);
      std::vector<const TimeSeriesFrame*> batch;
      std::vector<std::vector<std::uint8_t>> masks;
      for (std::size_t i = begin; i < end; ++i) {
        const TimeSeriesFrame& seg = segments[order[i]];
        batch.push_back(&seg);
        masks.push_back(plan_to_grid(mask_by_ratio(
            seg, cfg_.train_mask_ratio, {cfg_.train_gap_min, cfg_.train_gap_max}, rng.next())));
      }
      const BatchTensors bt = assemble(batch, &masks);
      if (bt.n_loss_cells == 0) continue;

      double loss_val = 0.0;
      try {
        const Tensor pred = encode(bt.input, bt.n_segments, true);
        const Tensor diff = mul(sub(pred, bt.target), bt.weight);
        const Tensor loss =
            scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(bt.n_loss_cells));
        loss_val = loss.item();
        backward(loss);
      } catch (const std::runtime_error& e) {
        diverged(epoch, e.what());
      }
      if (!std::isfinite(loss_val)) diverged(epoch, "non-finite loss");
      opt.step();
      opt.zero_grad();
      sse += loss_val * static_cast<double>(bt.n_loss_cells);
      cells += bt.n_loss_cells;
    }
    result.train_loss.push_back(cells ? sse / static_cast<double>(cells) : 0.0);

    if (!val_segments.empty()) {
      double vs = 0.0;
      std::size_t vc = 0;
      for (std::size_t i = 0; i < val_segments.size(); ++i) {
        std::vector<std::vector<std::uint8_t>> one{val_masks[i]};
        const BatchTensors bt = assemble({&val_segments[i]}, &one);
        if (bt.n_loss_cells == 0) continue;
        const Tensor pred = encode(bt.input, 1, false);
        const Tensor diff = mul(sub(pred, bt.target), bt.weight);
        const Tensor loss =
            scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(bt.n_loss_cells));
        vs += loss.item() * static_cast<double>(bt.n_loss_cells);
        vc += bt.n_loss_cells;
      }
      result.val_loss.push_back(vc ? vs / static_cast<double>(vc) : 0.0);
    }
  }
  return result;
}

TimeSeriesFrame TransformerImputer::impute(const TimeSeriesFrame& frame) const {
  if (frame.n_channels() != cfg_.n_channels)
    throw std::invalid_argument("imputer impute: frame has " +
                                std::to_string(frame.n_channels()) + " channels, model expects " +
                                std::to_string(cfg_.n_channels));
  if (frame.observed_count() == frame.values.size()) return frame;
  const std::size_t t = cfg_.window_len, c = cfg_.n_channels, n = frame.n_steps;
  if (n < t)
    throw std::invalid_argument("imputer impute: frame length " + std::to_string(n) +
                                " is shorter than the model window " + std::to_string(t));

  const TimeSeriesFrame work = stats_ ? standardize(frame, *stats_) : frame;

  std::vector<double> acc(c * n, 0.0);
  std::vector<int> hits(c * n, 0);
  std::vector<std::uint8_t> col_done(n, 0);

  auto column_missing = [&](std::size_t ts) {
    for (std::size_t ch = 0; ch < c; ++ch)
      if (!work.is_observed(ch, ts)) return true;
    return false;
  };

  for (std::size_t ts = 0; ts < n; ++ts) {
    if (col_done[ts] || !column_missing(ts)) continue;
    const std::size_t w = std::min(ts, n - t);
    TimeSeriesFrame window = TimeSeriesFrame::make(work.channels, t, work.sample_rate_hz,
                                                   work.subject_id);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < t; ++k)
        if (work.is_observed(ch, w + k)) window.set(ch, k, work.raw(ch, w + k));
    const std::vector<double> recon = forward(window);
    for (std::size_t k = 0; k < t; ++k) {
      for (std::size_t ch = 0; ch < c; ++ch)
        if (!work.is_observed(ch, w + k)) {
          acc[ch * n + w + k] += recon[ch * t + k];
          ++hits[ch * n + w + k];
        }
      col_done[w + k] = 1;
    }
  }

  TimeSeriesFrame out = work;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ts = 0; ts < n; ++ts)
      if (!work.is_observed(ch, ts))
        out.set(ch, ts, acc[ch * n + ts] / static_cast<double>(hits[ch * n + ts]));

  if (stats_) {
    out = destandardize(out, *stats_);
    // Keep observed cells bit-identical to the input rather than round-
    // tripped through the z-score.
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ts = 0; ts < n; ++ts)
        if (frame.is_observed(ch, ts)) out.values[out.idx(ch, ts)] = frame.raw(ch, ts);
  }
  return out;
}

void TransformerImputer::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.engine_version = kVersion;
  ckpt.config_hash = cfg_.hash();

  json meta;
  meta["kind"] = "imputer";
  meta["config"] = json::parse(cfg_.canonical_json());
  meta["has_stats"] = stats_.has_value();
  if (stats_) {
    meta["stats_mean"] = stats_->mean;
    meta["stats_std"] = stats_->stddev;
  }
  json bn_updates = json::array();
  for (const Layer& l : layers_) bn_updates.push_back(l.bn_state.updates);
  meta["bn_updates"] = bn_updates;
  ckpt.metadata = meta.dump();

  for (const auto& [name, tensor] : named_parameters()) ckpt.add(name, tensor);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".bn.";
    const auto& st = layers_[i].bn_state;
    ckpt.add(p + "running_mean", Tensor({st.running_mean.size()},
                                        std::vector<double>(st.running_mean)));
    ckpt.add(p + "running_var",
             Tensor({st.running_var.size()}, std::vector<double>(st.running_var)));
  }
  save_checkpoint(ckpt, path);
}

TransformerImputer TransformerImputer::load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw std::runtime_error("imputer load: bad checkpoint metadata: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "imputer")
    throw std::runtime_error("imputer load: checkpoint kind is '" + meta.value("kind", "") +
                             "', expected 'imputer'");
  const ImputerConfig cfg = config_from_json(meta.at("config"));
  if (ckpt.config_hash != cfg.hash())
    throw std::runtime_error("imputer load: config hash mismatch (corrupt checkpoint?)");

  TransformerImputer model(cfg, 0);
  for (auto& [name, tensor] : model.named_parameters()) {
    const Tensor stored = ckpt.tensor(name);
    if (stored.shape() != tensor.shape())
      throw std::runtime_error("imputer load: shape mismatch for " + name);
    auto dst = tensor.mutable_data();
    auto src = stored.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (std::size_t i = 0; i < model.layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".bn.";
    const Tensor rm = ckpt.tensor(p + "running_mean");
    const Tensor rv = ckpt.tensor(p + "running_var");
    model.layers_[i].bn_state.running_mean.assign(rm.data().begin(), rm.data().end());
    model.layers_[i].bn_state.running_var.assign(rv.data().begin(), rv.data().end());
    if (meta.contains("bn_updates") && i < meta["bn_updates"].size())
      model.layers_[i].bn_state.updates = meta["bn_updates"][i].get<std::uint64_t>();
  }
  if (meta.value("has_stats", false)) {
    ChannelStats stats;
    stats.mean = meta.at("stats_mean").get<std::vector<double>>();
    stats.stddev = meta.at("stats_std").get<std::vector<double>>();
    model.set_stats(std::move(stats));
  }
  return model;
}

}  // namespace gapfill
