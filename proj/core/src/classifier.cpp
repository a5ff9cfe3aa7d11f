#include "gapfill/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gapfill/adam.hpp"
#include "gapfill/checkpoint.hpp"
#include "gapfill/masking.hpp"
#include "gapfill/metrics.hpp"
#include "gapfill/version.hpp"

namespace gapfill {

using nlohmann::json;

void ClassifierConfig::validate() const {
  if (patch_size == 0 || depth == 0 || n_heads == 0 || d_emb == 0 || d_attn == 0 || d_mlp == 0)
    throw std::invalid_argument("classifier config: model dimensions must be positive");
  if (n_classes < 2) throw std::invalid_argument("classifier config: need at least 2 classes");
  if (n_channels == 0 || window_len == 0)
    throw std::invalid_argument("classifier config: channels and window length must be positive");
  if (window_len % patch_size != 0)
    throw std::invalid_argument("classifier config: window length " + std::to_string(window_len) +
                                " is not a multiple of patch size " + std::to_string(patch_size));
  for (double p : {p_emb, p_attn, p_mlp})
    if (!(p >= 0.0 && p < 1.0))
      throw std::invalid_argument("classifier config: dropout rates must lie in [0, 1)");
  if (!(learning_rate > 0)) throw std::invalid_argument("classifier config: learning rate must be > 0");
  if (epochs == 0 || batch_size == 0)
    throw std::invalid_argument("classifier config: epochs and batch size must be >= 1");
}

std::string ClassifierConfig::canonical_json() const {
  json j;
  j["patch_size"] = patch_size;
  j["depth"] = depth;
  j["n_heads"] = n_heads;
  j["d_emb"] = d_emb;
  j["d_attn"] = d_attn;
  j["d_mlp"] = d_mlp;
  j["p_emb"] = p_emb;
  j["p_attn"] = p_attn;
  j["p_mlp"] = p_mlp;
  j["n_classes"] = n_classes;
  j["n_channels"] = n_channels;
  j["window_len"] = window_len;
  j["mean_pool"] = mean_pool;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["patience"] = patience;
  return j.dump();
}

std::uint64_t ClassifierConfig::hash() const { return fnv1a_hash(canonical_json()); }

namespace {

ClassifierConfig classifier_config_from_json(const json& j) {
  ClassifierConfig c;
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_emb = j.at("d_emb").get<std::size_t>();
  c.d_attn = j.at("d_attn").get<std::size_t>();
  c.d_mlp = j.at("d_mlp").get<std::size_t>();
  c.p_emb = j.at("p_emb").get<double>();
  c.p_attn = j.at("p_attn").get<double>();
  c.p_mlp = j.at("p_mlp").get<double>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.n_channels = j.at("n_channels").get<std::size_t>();
  c.window_len = j.at("window_len").get<std::size_t>();
  c.mean_pool = j.at("mean_pool").get<bool>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  return c;
}

void check_window(const LabeledWindow& w, const ClassifierConfig& cfg, const char* who) {
  if (w.n_channels != cfg.n_channels || w.window_len != cfg.window_len)
    throw std::invalid_argument(std::string(who) + ": window is " + std::to_string(w.n_channels) +
                                "x" + std::to_string(w.window_len) + " but the model expects " +
                                std::to_string(cfg.n_channels) + "x" +
                                std::to_string(cfg.window_len));
}

TimeSeriesFrame window_to_frame(const LabeledWindow& w) {
  std::vector<ChannelInfo> channels(w.n_channels);
  for (std::size_t c = 0; c < w.n_channels; ++c) channels[c].name = "c" + std::to_string(c);
  TimeSeriesFrame f = TimeSeriesFrame::make(std::move(channels), w.window_len, 1.0, w.subject_id);
  for (std::size_t c = 0; c < w.n_channels; ++c)
    for (std::size_t t = 0; t < w.window_len; ++t) f.set(c, t, w.at(c, t));
  return f;
}

}  // namespace

std::vector<double> instance_normalize(std::span<const double> window, std::size_t n_channels,
                                       std::size_t window_len) {
  if (window_len < 2) throw std::invalid_argument("instance_normalize: window length must be >= 2");
  if (window.size() != n_channels * window_len)
    throw std::invalid_argument("instance_normalize: size mismatch");
  std::vector<double> out(window.size());
  for (std::size_t c = 0; c < n_channels; ++c) {
    const double* x = window.data() + c * window_len;
    double mean = 0;
    for (std::size_t t = 0; t < window_len; ++t) mean += x[t];
    mean /= static_cast<double>(window_len);
    double var = 0;
    for (std::size_t t = 0; t < window_len; ++t) var += (x[t] - mean) * (x[t] - mean);
    var /= static_cast<double>(window_len);
    const double sd = std::sqrt(var);
    double* y = out.data() + c * window_len;
    if (sd < 1e-9) {
      std::fill(y, y + window_len, 0.0);
    } else {
      for (std::size_t t = 0; t < window_len; ++t) y[t] = (x[t] - mean) / sd;
    }
  }
  return out;
}

std::vector<double> patchify(std::span<const double> window, std::size_t n_channels,
                             std::size_t window_len, std::size_t patch_size) {
  if (patch_size == 0 || window_len % patch_size != 0)
    throw std::invalid_argument("patchify: patch size must divide window length");
  if (window.size() != n_channels * window_len)
    throw std::invalid_argument("patchify: size mismatch");
  const std::size_t n_patches = window_len / patch_size;
  std::vector<double> out(window.size());
  for (std::size_t i = 0; i < n_patches; ++i)
    for (std::size_t tl = 0; tl < patch_size; ++tl)
      for (std::size_t c = 0; c < n_channels; ++c)
        out[i * patch_size * n_channels + tl * n_channels + c] =
            window[c * window_len + i * patch_size + tl];
  return out;
}

std::vector<double> unpatchify(std::span<const double> patches, std::size_t n_channels,
                               std::size_t window_len, std::size_t patch_size) {
  if (patch_size == 0 || window_len % patch_size != 0)
    throw std::invalid_argument("unpatchify: patch size must divide window length");
  if (patches.size() != n_channels * window_len)
    throw std::invalid_argument("unpatchify: size mismatch");
  const std::size_t n_patches = window_len / patch_size;
  std::vector<double> out(patches.size());
  for (std::size_t i = 0; i < n_patches; ++i)
    for (std::size_t tl = 0; tl < patch_size; ++tl)
      for (std::size_t c = 0; c < n_channels; ++c)
        out[c * window_len + i * patch_size + tl] =
            patches[i * patch_size * n_channels + tl * n_channels + c];
  return out;
}

PatchClassifier::PatchClassifier(ClassifierConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.d_emb, p = cfg_.patch_dim(), inner = cfg_.n_heads * cfg_.d_attn,
                    m = cfg_.d_mlp, k = cfg_.n_classes;
  const std::size_t tokens = cfg_.n_patches() + (cfg_.mean_pool ? 0 : 1);

  patch_embed_w_ = Tensor::randn({p, d}, rng, std::sqrt(1.0 / static_cast<double>(p)), true);
  patch_embed_b_ = Tensor::zeros({d}, true);
  if (!cfg_.mean_pool) cls_token_ = Tensor::randn({1, d}, rng, 0.02, true);
  pos_embed_ = Tensor::randn({tokens, d}, rng, 0.02, true);

  blocks_.resize(cfg_.depth);
  const double wd = std::sqrt(1.0 / static_cast<double>(d));
  for (Block& b : blocks_) {
    b.ln1_gamma = Tensor::full({d}, 1.0, true);
    b.ln1_beta = Tensor::zeros({d}, true);
    b.wq = Tensor::randn({d, inner}, rng, wd, true);
    b.wk = Tensor::randn({d, inner}, rng, wd, true);
    b.wv = Tensor::randn({d, inner}, rng, wd, true);
    b.wo = Tensor::randn({inner, d}, rng, std::sqrt(1.0 / static_cast<double>(inner)), true);
    b.bo = Tensor::zeros({d}, true);
    b.ln2_gamma = Tensor::full({d}, 1.0, true);
    b.ln2_beta = Tensor::zeros({d}, true);
    b.mlp_w1 = Tensor::randn({d, m}, rng, wd, true);
    b.mlp_b1 = Tensor::zeros({m}, true);
    b.mlp_w2 = Tensor::randn({m, d}, rng, std::sqrt(1.0 / static_cast<double>(m)), true);
    b.mlp_b2 = Tensor::zeros({d}, true);
  }

  final_ln_gamma_ = Tensor::full({d}, 1.0, true);
  final_ln_beta_ = Tensor::zeros({d}, true);
  head_w_ = Tensor::randn({d, k}, rng, wd, true);
  head_b_ = Tensor::zeros({k}, true);

  for (auto& [name, tensor] : named_parameters()) tensor.set_name(name);
}

std::vector<std::pair<std::string, Tensor>> PatchClassifier::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("patch_embed.weight", patch_embed_w_);
  out.emplace_back("patch_embed.bias", patch_embed_b_);
  if (!cfg_.mean_pool) out.emplace_back("cls_token", cls_token_);
  out.emplace_back("pos_embed", pos_embed_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    const Block& b = blocks_[i];
    out.emplace_back(p + "ln1.gamma", b.ln1_gamma);
    out.emplace_back(p + "ln1.beta", b.ln1_beta);
    out.emplace_back(p + "attn.wq", b.wq);
    out.emplace_back(p + "attn.wk", b.wk);
    out.emplace_back(p + "attn.wv", b.wv);
    out.emplace_back(p + "attn.wo.weight", b.wo);
    out.emplace_back(p + "attn.wo.bias", b.bo);
    out.emplace_back(p + "ln2.gamma", b.ln2_gamma);
    out.emplace_back(p + "ln2.beta", b.ln2_beta);
    out.emplace_back(p + "mlp.w1.weight", b.mlp_w1);
    out.emplace_back(p + "mlp.w1.bias", b.mlp_b1);
    out.emplace_back(p + "mlp.w2.weight", b.mlp_w2);
    out.emplace_back(p + "mlp.w2.bias", b.mlp_b2);
  }
  out.emplace_back("final_ln.gamma", final_ln_gamma_);
  out.emplace_back("final_ln.beta", final_ln_beta_);
  out.emplace_back("head.weight", head_w_);
  out.emplace_back("head.bias", head_b_);
  return out;
}

std::size_t PatchClassifier::count_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : named_parameters()) n += tensor.numel();
  return n;
}

std::size_t PatchClassifier::analytic_parameter_count(const ClassifierConfig& cfg) {
  const std::size_t d = cfg.d_emb, p = cfg.n_channels * cfg.patch_size,
                    inner = cfg.n_heads * cfg.d_attn, m = cfg.d_mlp, k = cfg.n_classes;
  const std::size_t tokens = cfg.window_len / cfg.patch_size + (cfg.mean_pool ? 0 : 1);
  const std::size_t embed = p * d + d;
  const std::size_t cls = cfg.mean_pool ? 0 : d;
  const std::size_t pos = tokens * d;
  const std::size_t block = 2 * d                      // ln1
                            + 3 * d * inner            // q, k, v (no biases)
                            + inner * d + d            // output projection
                            + 2 * d                    // ln2
                            + (d * m + m) + (m * d + d);  // mlp
  const std::size_t head = d * k + k;
  return embed + cls + pos + cfg.depth * block + 2 * d + head;
}

Tensor PatchClassifier::forward_logits(std::span<const double> window_values, bool training,
                                       Rng* rng) const {
  const std::size_t da = cfg_.d_attn, h = cfg_.n_heads;
  const std::size_t n_patches = cfg_.n_patches();

  const std::vector<double> norm =
      instance_normalize(window_values, cfg_.n_channels, cfg_.window_len);
  Tensor patches({n_patches, cfg_.patch_dim()},
                 patchify(norm, cfg_.n_channels, cfg_.window_len, cfg_.patch_size));

  Tensor x = affine(patches, patch_embed_w_, patch_embed_b_);
  if (!cfg_.mean_pool) {
    std::vector<Tensor> parts{cls_token_, x};
    x = concat(parts, 0);
  }
  x = add(x, pos_embed_);
  if (training) x = dropout(x, cfg_.p_emb, *rng, true);

  const double inv_sqrt_da = 1.0 / std::sqrt(static_cast<double>(da));
  for (const Block& b : blocks_) {
    const Tensor attn_in = layer_norm(x, b.ln1_gamma, b.ln1_beta);
    const Tensor q = matmul(attn_in, b.wq);
    const Tensor k = matmul(attn_in, b.wk);
    const Tensor v = matmul(attn_in, b.wv);
    std::vector<Tensor> heads;
    heads.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
      const Tensor qi = slice(q, 1, i * da, (i + 1) * da);
      const Tensor ki = slice(k, 1, i * da, (i + 1) * da);
      const Tensor vi = slice(v, 1, i * da, (i + 1) * da);
      const Tensor weights = softmax(scale(matmul(qi, transpose(ki)), inv_sqrt_da), 1);
      heads.push_back(matmul(weights, vi));
    }
    Tensor attn_out = affine(concat(heads, 1), b.wo, b.bo);
    if (training) attn_out = dropout(attn_out, cfg_.p_attn, *rng, true);
    x = add(x, attn_out);

    const Tensor mlp_in = layer_norm(x, b.ln2_gamma, b.ln2_beta);
    Tensor mlp_out =
        affine(gelu(affine(mlp_in, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
    if (training) mlp_out = dropout(mlp_out, cfg_.p_mlp, *rng, true);
    x = add(x, mlp_out);
  }

  x = layer_norm(x, final_ln_gamma_, final_ln_beta_);
  Tensor pooled;
  if (cfg_.mean_pool) {
    const std::size_t tokens = n_patches;
    Tensor ones({1, tokens}, std::vector<double>(tokens, 1.0 / static_cast<double>(tokens)));
    pooled = matmul(ones, x);
  } else {
    pooled = slice(x, 0, 0, 1);
  }
  return affine(pooled, head_w_, head_b_);  // [1 x n_classes]
}

std::vector<double> PatchClassifier::class_probabilities(const LabeledWindow& window) const {
  check_window(window, cfg_, "classifier");
  const Tensor probs = softmax(forward_logits(window.values, false, nullptr), 1);
  return std::vector<double>(probs.data().begin(), probs.data().end());
}

int PatchClassifier::predict(const LabeledWindow& window) const {
  const auto probs = class_probabilities(window);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double PatchClassifier::evaluate_accuracy(const std::vector<LabeledWindow>& windows) const {
  if (windows.empty()) throw std::invalid_argument("evaluate_accuracy: no windows");
  std::size_t hits = 0;
  for (const auto& w : windows)
    if (predict(w) == w.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(windows.size());
}

std::vector<double> PatchClassifier::snapshot_parameters() const {
  std::vector<double> flat;
  for (const auto& [name, tensor] : named_parameters())
    flat.insert(flat.end(), tensor.data().begin(), tensor.data().end());
  return flat;
}

void PatchClassifier::restore_parameters(std::span<const double> flat) {
  std::size_t off = 0;
  for (auto& [name, tensor] : named_parameters()) {
    auto dst = tensor.mutable_data();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
    off += dst.size();
  }
  if (off != flat.size()) throw std::logic_error("restore_parameters: size mismatch");
}

PatchClassifier::EpochLog PatchClassifier::train(const std::vector<LabeledWindow>& train_windows,
                                                 const std::vector<LabeledWindow>& val_windows,
                                                 std::uint64_t seed) {
  if (train_windows.empty()) throw std::invalid_argument("classifier train: no windows");
  for (const auto& w : train_windows) {
    check_window(w, cfg_, "classifier train");
    if (w.label < 0 || static_cast<std::size_t>(w.label) >= cfg_.n_classes)
      throw std::invalid_argument("classifier train: label " + std::to_string(w.label) +
                                  " outside [0, " + std::to_string(cfg_.n_classes) + ")");
  }

  Rng rng(seed);
  std::vector<Tensor> params;
  for (auto& [name, tensor] : named_parameters()) params.push_back(tensor);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg_.learning_rate;
  AdamOptimizer opt(params, adam_cfg);

  EpochLog log;
  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_acc = -1.0;
  std::vector<double> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.bounded(i)]);

    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg_.batch_size);
      std::vector<Tensor> losses;
      losses.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const LabeledWindow& w = train_windows[order[i]];
        const Tensor probs = softmax(forward_logits(w.values, true, &rng), 1);
        const Tensor picked = slice(probs, 1, static_cast<std::size_t>(w.label),
                                    static_cast<std::size_t>(w.label) + 1);
        losses.push_back(scale(elem_log(picked), -1.0));
      }
      const Tensor batch_loss = mean(concat(losses, 0));
      const double lv = batch_loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("classifier training diverged at epoch " +
                                 std::to_string(epoch));
      backward(batch_loss);
      opt.step();
      opt.zero_grad();
      loss_sum += lv * static_cast<double>(end - begin);
      seen += end - begin;
    }
    log.train_loss.push_back(loss_sum / static_cast<double>(seen));

    if (!val_windows.empty()) {
      const double acc = evaluate_accuracy(val_windows);
      log.val_accuracy.push_back(acc);
      if (acc > best_acc) {
        best_acc = acc;
        best_params = snapshot_parameters();
        since_best = 0;
      } else if (++since_best >= cfg_.patience) {
        break;  // early stopping
      }
    }
  }
  if (!best_params.empty()) restore_parameters(best_params);
  return log;
}

void PatchClassifier::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.engine_version = kVersion;
  ckpt.config_hash = cfg_.hash();
  json meta;
  meta["kind"] = "classifier";
  meta["config"] = json::parse(cfg_.canonical_json());
  ckpt.metadata = meta.dump();
  for (const auto& [name, tensor] : named_parameters()) ckpt.add(name, tensor);
  save_checkpoint(ckpt, path);
}

PatchClassifier PatchClassifier::load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw std::runtime_error("classifier load: bad checkpoint metadata: " +
                             std::string(e.what()));
  }
  if (meta.value("kind", "") != "classifier")
    throw std::runtime_error("classifier load: checkpoint kind is '" + meta.value("kind", "") +
                             "', expected 'classifier'");
  const ClassifierConfig cfg = classifier_config_from_json(meta.at("config"));
  if (ckpt.config_hash != cfg.hash())
    throw std::runtime_error("classifier load: config hash mismatch (corrupt checkpoint?)");

  PatchClassifier model(cfg, 0);
  for (auto& [name, tensor] : model.named_parameters()) {
    const Tensor stored = ckpt.tensor(name);
    if (stored.shape() != tensor.shape())
      throw std::runtime_error("classifier load: shape mismatch for " + name);
    auto dst = tensor.mutable_data();
    auto src = stored.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return model;
}

LosoOutcome train_loso(const std::vector<LabeledWindow>& windows, const ClassifierConfig& cfg,
                       std::uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("train_loso: no windows");
  std::set<std::string> subject_set;
  for (const auto& w : windows) subject_set.insert(w.subject_id);
  if (subject_set.size() < 2)
    throw std::invalid_argument("train_loso: needs at least 2 subjects, got " +
                                std::to_string(subject_set.size()));
  const std::vector<std::string> subjects(subject_set.begin(), subject_set.end());

  Rng rng(seed);
  std::vector<FoldResult> folds;
  std::optional<PatchClassifier> best;
  double best_acc = -1.0;

  for (const std::string& held_out : subjects) {
    const std::uint64_t fold_seed = rng.next();
    std::vector<LabeledWindow> train_set, val_set;
    for (const auto& w : windows)
      (w.subject_id == held_out ? val_set : train_set).push_back(w);

    PatchClassifier model(cfg, fold_seed);
    model.train(train_set, val_set, fold_seed);

    FoldResult fold;
    fold.held_out_subject = held_out;
    fold.confusion.assign(cfg.n_classes * cfg.n_classes, 0);
    std::size_t hits = 0;
    for (const auto& w : val_set) {
      const int pred = model.predict(w);
      fold.confusion[static_cast<std::size_t>(w.label) * cfg.n_classes +
                     static_cast<std::size_t>(pred)]++;
      if (pred == w.label) ++hits;
    }
    fold.accuracy = static_cast<double>(hits) / static_cast<double>(val_set.size());
    if (fold.accuracy > best_acc) {
      best_acc = fold.accuracy;
      best.emplace(std::move(model));
    }
    folds.push_back(std::move(fold));
  }

  double mean_acc = 0;
  for (const auto& f : folds) mean_acc += f.accuracy;
  mean_acc /= static_cast<double>(folds.size());
  return LosoOutcome{std::move(folds), std::move(*best), mean_acc};
}

double evaluate_with_imputation(const PatchClassifier& clf,
                                const std::vector<LabeledWindow>& windows,
                                const std::string& strategy, const TransformerImputer* imputer,
                                double missing_rate, std::uint64_t seed,
                                std::pair<std::size_t, std::size_t> gap_length_range) {
  if (windows.empty()) throw std::invalid_argument("evaluate_with_imputation: no windows");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0))
    throw std::invalid_argument("evaluate_with_imputation: missing rate must lie in [0, 1)");
  const bool known = strategy == "none" || strategy == "mean" || strategy == "linear" ||
                     strategy == "transformer";
  if (!known)
    throw std::invalid_argument("evaluate_with_imputation: unknown strategy '" + strategy + "'");
  if (strategy == "transformer" && imputer == nullptr)
    throw std::invalid_argument("evaluate_with_imputation: transformer strategy needs a model");

  if (missing_rate == 0.0) return clf.evaluate_accuracy(windows);

  const std::size_t w_len = clf.config().window_len;
  auto range = gap_length_range;
  range.second = std::min(range.second, w_len);
  range.first = std::min(range.first, range.second);

  Rng rng(seed);
  std::size_t hits = 0;
  for (const auto& w : windows) {
    const TimeSeriesFrame frame = window_to_frame(w);
    const MaskPlan plan = mask_by_ratio(frame, missing_rate, range, rng.next());
    auto [masked, truth] = apply_mask(frame, plan);

    TimeSeriesFrame filled = masked;
    if (strategy == "none") {
      for (const auto& [ch, ts] : plan.cells()) filled.set(ch, ts, 0.0);
    } else if (strategy == "transformer") {
      filled = imputer->impute(masked);
    } else {
      filled = impute_frame(masked, ImputerDescriptor::parse(strategy));
    }

    LabeledWindow patched = w;
    for (std::size_t c = 0; c < w.n_channels; ++c)
      for (std::size_t t = 0; t < w.window_len; ++t)
        patched.values[c * w.window_len + t] = filled.raw(c, t);
    if (clf.predict(patched) == w.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(windows.size());
}

}  // namespace gapfill
