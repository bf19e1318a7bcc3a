#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recmia/common.hpp"
#include "recmia/data.hpp"

namespace recmia {

struct FactorizationConfig {
  std::size_t latent_dim = 64;
  double learning_rate = 0.05;
  double regularization = 0.01;
  std::size_t epochs = 30;
  std::size_t negatives_per_positive = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be positive");
    if (!(regularization >= 0.0) || !std::isfinite(regularization))
      throw ConfigError("regularization must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const FactorizationConfig& c) {
  j = {{"latent_dim", c.latent_dim},
       {"learning_rate", c.learning_rate},
       {"regularization", c.regularization},
       {"epochs", c.epochs},
       {"negatives_per_positive", c.negatives_per_positive},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FactorizationConfig& c) {
  FactorizationConfig d;
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.regularization = j.value("regularization", d.regularization);
  c.epochs = j.value("epochs", d.epochs);
  c.negatives_per_positive = j.value("negatives_per_positive", d.negatives_per_positive);
  c.seed = j.value("seed", d.seed);
}

// One latent vector per item of the global catalog. Items that never occur
// in the training subset keep a zero row and are marked unfitted.
class ItemFeatureMatrix {
 public:
  ItemFeatureMatrix() = default;
  ItemFeatureMatrix(DenseMatrix vectors, std::vector<bool> fitted, std::uint64_t fingerprint = 0)
      : vectors_(std::move(vectors)), fitted_(std::move(fitted)), fingerprint_(fingerprint) {
    if (fitted_.size() != vectors_.rows()) throw Error("fitted flags do not match row count");
    for (double v : vectors_.data())
      if (!std::isfinite(v)) throw Error("item feature matrix contains a non-finite entry");
    for (std::size_t i = 0; i < fitted_.size(); ++i) {
      if (fitted_[i]) continue;
      for (double& v : vectors_.row(i)) v = 0.0;
    }
  }

  std::size_t num_items() const { return vectors_.rows(); }
  std::size_t latent_dim() const { return vectors_.cols(); }
  std::uint64_t fingerprint() const { return fingerprint_; }
  const DenseMatrix& vectors() const { return vectors_; }

  std::span<const double> row(ItemIndex item) const {
    check(item);
    return vectors_.row(item);
  }
  bool fitted(ItemIndex item) const {
    check(item);
    return fitted_[item];
  }
  std::size_t count_unfitted(std::span<const ItemIndex> items) const {
    std::size_t n = 0;
    for (ItemIndex i : items) n += fitted(i) ? 0 : 1;
    return n;
  }

  bool operator==(const ItemFeatureMatrix&) const = default;

 private:
  void check(ItemIndex item) const {
    if (item >= vectors_.rows())
      throw Error("item index " + std::to_string(item) + " out of range [0, " +
                  std::to_string(vectors_.rows()) + ")");
  }

  DenseMatrix vectors_;
  std::vector<bool> fitted_;
  std::uint64_t fingerprint_ = 0;
};

inline Vector item_vector(const ItemFeatureMatrix& fm, ItemIndex item) {
  auto r = fm.row(item);
  return Vector(r.begin(), r.end());
}

// Arithmetic mean of the rows of `items`.
inline Vector mean_feature(const ItemFeatureMatrix& fm, std::span<const ItemIndex> items) {
  if (items.empty()) throw Error("mean_feature of an empty item list");
  Vector mean(fm.latent_dim(), 0.0);
  for (ItemIndex i : items) {
    auto r = fm.row(i);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r[k];
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  for (double& v : mean) v *= inv;
  return mean;
}

struct TrainingSample {
  UserIndex user;
  ItemIndex item;
  double target;  // 1 for an observed pair, 0 for a sampled negative
};

// Observed pairs plus `negatives_per_positive` sampled non-interacted items per
// pair. Negatives are drawn only from items that occur in `ds`.
inline std::vector<TrainingSample> sample_training_pairs(const InteractionDataset& ds,
                                                         std::size_t negatives_per_positive,
                                                         Rng& rng) {
  std::vector<bool> present(ds.num_items(), false);
  for (const auto& h : ds.histories)
    for (ItemIndex i : h) present[i] = true;
  std::vector<ItemIndex> catalog;
  for (std::size_t i = 0; i < present.size(); ++i)
    if (present[i]) catalog.push_back(static_cast<ItemIndex>(i));

  std::vector<TrainingSample> samples;
  std::vector<bool> seen(ds.num_items(), false);
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    const auto& h = ds.histories[u];
    for (ItemIndex i : h) seen[i] = true;
    std::vector<ItemIndex> complement;
    if (h.size() < catalog.size() && 2 * h.size() > catalog.size()) {
      for (ItemIndex i : catalog)
        if (!seen[i]) complement.push_back(i);
    }
    for (ItemIndex i : h) {
      samples.push_back({static_cast<UserIndex>(u), i, 1.0});
      if (h.size() >= catalog.size()) continue;
      for (std::size_t k = 0; k < negatives_per_positive; ++k) {
        ItemIndex neg;
        if (!complement.empty()) {
          neg = complement[rng.index(complement.size())];
        } else {
          do {
            neg = catalog[rng.index(catalog.size())];
          } while (seen[neg]);
        }
        samples.push_back({static_cast<UserIndex>(u), neg, 0.0});
      }
    }
    for (ItemIndex i : h) seen[i] = false;
  }
  return samples;
}

// Mean over samples of 0.5*(target - h_u.w_i)^2 + 0.5*lambda*(|h_u|^2 + |w_i|^2).
// Plain SGD on this objective is what factorize() runs.
inline double factorization_objective(const DenseMatrix& users, const DenseMatrix& items,
                                      std::span<const TrainingSample> samples, double lambda) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    auto h = users.row(s.user);
    auto w = items.row(s.item);
    const double e = s.target - dot(h, w);
    total += 0.5 * e * e + 0.5 * lambda * (dot(h, h) + dot(w, w));
  }
  return total / static_cast<double>(samples.size());
}

// Gradient of one sample's term with respect to h_u and w_i.
inline void sample_gradient(std::span<const double> h, std::span<const double> w, double target,
                            double lambda, std::span<double> grad_h, std::span<double> grad_w) {
  const double e = target - dot(h, w);
  for (std::size_t k = 0; k < h.size(); ++k) {
    grad_h[k] = -e * w[k] + lambda * h[k];
    grad_w[k] = -e * h[k] + lambda * w[k];
  }
}

inline std::pair<DenseMatrix, DenseMatrix> factorization_gradient(
    const DenseMatrix& users, const DenseMatrix& items, std::span<const TrainingSample> samples,
    double lambda) {
  DenseMatrix gu(users.rows(), users.cols()), gi(items.rows(), items.cols());
  Vector gh(users.cols()), gw(users.cols());
  const double inv = samples.empty() ? 0.0 : 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    sample_gradient(users.row(s.user), items.row(s.item), s.target, lambda, gh, gw);
    auto ru = gu.row(s.user);
    auto ri = gi.row(s.item);
    for (std::size_t k = 0; k < gh.size(); ++k) {
      ru[k] += inv * gh[k];
      ri[k] += inv * gw[k];
    }
  }
  return {std::move(gu), std::move(gi)};
}

struct Factorization {
  DenseMatrix user_factors;  // p x l
  ItemFeatureMatrix item_features;
  std::vector<double> loss_trace;  // objective after each epoch
};

inline std::uint64_t factorization_fingerprint(const InteractionDataset& ds,
                                               const FactorizationConfig& cfg) {
  Fingerprint fp;
  fp.add(dataset_fingerprint(ds))
      .add(static_cast<std::uint64_t>(cfg.latent_dim))
      .add(cfg.learning_rate)
      .add(cfg.regularization)
      .add(static_cast<std::uint64_t>(cfg.epochs))
      .add(static_cast<std::uint64_t>(cfg.negatives_per_positive))
      .add(cfg.seed);
  return fp.value();
}

inline Factorization factorize(const InteractionDataset& ds, const FactorizationConfig& cfg) {
  cfg.validate();
  if (ds.empty() || ds.num_interactions() == 0) throw Error("cannot factorize an empty dataset");

  Rng rng(cfg.seed);
  const std::size_t l = cfg.latent_dim;
  DenseMatrix users(ds.num_users(), l), items(ds.num_items(), l);
  for (double& v : users.data()) v = rng.uniform(-0.01, 0.01);
  for (double& v : items.data()) v = rng.uniform(-0.01, 0.01);

  std::vector<TrainingSample> samples = sample_training_pairs(ds, cfg.negatives_per_positive, rng);
  Vector gh(l), gw(l);
  Factorization out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(samples);
    for (const auto& s : samples) {
      auto h = users.row(s.user);
      auto w = items.row(s.item);
      sample_gradient(h, w, s.target, cfg.regularization, gh, gw);
      for (std::size_t k = 0; k < l; ++k) {
        h[k] -= cfg.learning_rate * gh[k];
        w[k] -= cfg.learning_rate * gw[k];
      }
    }
    const double loss = factorization_objective(users, items, samples, cfg.regularization);
    if (!std::isfinite(loss))
      throw Error("factorization diverged at epoch " + std::to_string(epoch + 1) +
                  " (learning_rate=" + std::to_string(cfg.learning_rate) +
                  "); try a smaller learning rate");
    out.loss_trace.push_back(loss);
    log_debug("factorize epoch ", epoch + 1, " loss ", loss);
  }

  std::vector<bool> fitted(ds.num_items(), false);
  for (const auto& h : ds.histories)
    for (ItemIndex i : h) fitted[i] = true;
  out.user_factors = std::move(users);
  out.item_features = ItemFeatureMatrix(std::move(items), std::move(fitted),
                                        factorization_fingerprint(ds, cfg));
  return out;
}

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw Error("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline std::uint32_t read_u32_le(std::istream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw Error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& path) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw Error("'" + path + "' is not a " + std::string(magic) + " file");
}

}  // namespace detail

inline constexpr std::string_view kFeatureMagic = "RMIAFEAT";
inline constexpr std::uint32_t kFeatureVersion = 1;

// Binary layout: magic[8] | version u32 | q u64 | l u64 | fingerprint u64 |
// q*l little-endian f64, row-major. Fitted flags and hyperparameters go to
// the `<path>.json` sidecar.
inline void save_item_features(const ItemFeatureMatrix& fm, const std::string& path,
                               const nlohmann::json& hyperparameters = nlohmann::json::object()) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(kFeatureMagic.data(), kFeatureMagic.size());
    detail::write_u32_le(out, kFeatureVersion);
    detail::write_u64_le(out, fm.num_items());
    detail::write_u64_le(out, fm.latent_dim());
    detail::write_u64_le(out, fm.fingerprint());
    for (double v : fm.vectors().data()) detail::write_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  std::vector<ItemIndex> unfitted;
  for (std::size_t i = 0; i < fm.num_items(); ++i)
    if (!fm.fitted(static_cast<ItemIndex>(i))) unfitted.push_back(static_cast<ItemIndex>(i));
  nlohmann::json sidecar = {{"format", "recmia-features"},
                            {"version", kFeatureVersion},
                            {"fingerprint", Fingerprint().add(fm.fingerprint()).hex()},
                            {"num_items", fm.num_items()},
                            {"latent_dim", fm.latent_dim()},
                            {"hyperparameters", hyperparameters},
                            {"unfitted_items", unfitted}};
  std::ofstream side(path + ".json");
  if (!side) throw Error("cannot write '" + path + ".json'");
  side << sidecar.dump(2) << '\n';
}

inline ItemFeatureMatrix load_item_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  detail::expect_magic(in, kFeatureMagic, path);
  const std::uint32_t version = detail::read_u32_le(in);
  if (version != kFeatureVersion)
    throw Error("'" + path + "' has feature format version " + std::to_string(version) +
                ", expected " + std::to_string(kFeatureVersion));
  const std::uint64_t q = detail::read_u64_le(in);
  const std::uint64_t l = detail::read_u64_le(in);
  const std::uint64_t fingerprint = detail::read_u64_le(in);
  DenseMatrix m(q, l);
  for (double& v : m.data()) v = std::bit_cast<double>(detail::read_u64_le(in));

  std::vector<bool> fitted(q, true);
  auto side_in = detail::open_input(path + ".json");
  const auto side = nlohmann::json::parse(side_in);
  for (const auto& i : side.at("unfitted_items")) {
    const auto idx = i.get<std::uint64_t>();
    if (idx >= q) throw Error("feature sidecar names item out of range");
    fitted[idx] = false;
  }
  return ItemFeatureMatrix(std::move(m), std::move(fitted), fingerprint);
}

}  // namespace recmia
