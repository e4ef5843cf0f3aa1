#include "findml/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "findml/random.hpp"

namespace findml {

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

int Dataset::num_classes() const {
  return classes.empty() ? 0 : *std::max_element(classes.begin(), classes.end()) + 1;
}

int Dataset::num_attributes() const {
  return attributes.empty() ? 0 : *std::max_element(attributes.begin(), attributes.end()) + 1;
}

IndexList Dataset::indices(Split s) const {
  IndexList out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

Dataset Dataset::subset(const IndexList& rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<std::size_t>(rows[r]);
    out.features.row(static_cast<Index>(r)) = features.row(rows[r]);
    out.classes.push_back(classes[i]);
    out.attributes.push_back(attributes[i]);
    out.split.push_back(split[i]);
    out.ids.push_back(ids[i]);
  }
  return out;
}

IndexList Dataset::class_counts(Split s) const {
  IndexList counts(static_cast<std::size_t>(num_classes()), 0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (split[i] == s) ++counts[static_cast<std::size_t>(classes[i])];
  }
  return counts;
}

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(features.rows());
  require(classes.size() == n && attributes.size() == n && split.size() == n && ids.size() == n,
          ErrorCode::InvalidArgument, "dataset arrays differ in length");
  require(n > 0, ErrorCode::InvalidArgument, "dataset is empty");
  std::vector<bool> seen(static_cast<std::size_t>(num_classes()), false);
  for (int c : classes) {
    require(c >= 0, ErrorCode::InvalidArgument, "negative class id");
    seen[static_cast<std::size_t>(c)] = true;
  }
  for (int a : attributes) require(a >= 0, ErrorCode::InvalidArgument, "negative attribute");
  for (std::size_t c = 0; c < seen.size(); ++c) {
    require(seen[c], ErrorCode::InvalidArgument, "class " + std::to_string(c) + " has no samples");
  }
}

std::size_t SubgroupPartition::total() const {
  std::size_t n = 0;
  for (const auto& [a, idx] : groups) n += idx.size();
  return n;
}

namespace {

Vector random_unit(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  require(spec.classes >= 2 && spec.per_class >= 4 && spec.feature_dim >= 2,
          ErrorCode::InvalidArgument, "synthetic data needs C>=2, m>=4, F>=2");
  require(spec.attribute_correlation >= 0.0 && spec.attribute_correlation <= 1.0,
          ErrorCode::InvalidArgument, "attribute_correlation outside [0,1]");
  require(spec.cluster_spread > 0.0, ErrorCode::InvalidArgument, "cluster_spread must be positive");

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(spec.classes, spec.feature_dim);
  for (int c = 0; c < spec.classes; ++c) centers.row(c) = random_unit(spec.feature_dim, rng).transpose();
  const Vector attr_dir = random_unit(spec.feature_dim, rng);
  const double shift = spec.attribute_shift * spec.cluster_spread;

  Dataset ds;
  const int n = spec.classes * spec.per_class;
  ds.features.resize(n, spec.feature_dim);
  int row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.per_class; ++s, ++row) {
      int attr = 0;
      if (uniform_unit(rng) < spec.attribute_correlation) {
        attr = linked_attribute(c, spec.classes);
      } else {
        attr = uniform_unit(rng) < 0.5 ? 0 : 1;
      }
      for (int f = 0; f < spec.feature_dim; ++f) {
        ds.features(row, f) = centers(c, f) + spec.cluster_spread * normal(rng) + attr * shift * attr_dir(f);
      }
      ds.classes.push_back(c);
      ds.attributes.push_back(attr);
      ds.split.push_back(Split::Train);
      ds.ids.push_back(row);
    }
  }
  return ds;
}

IndexList select_minoritized_classes(int num_classes, int count, std::uint64_t seed) {
  require(count >= 0 && count < num_classes, ErrorCode::InvalidArgument,
          "minoritized class count must be below the class count");
  IndexList all(static_cast<std::size_t>(num_classes));
  std::iota(all.begin(), all.end(), 0);
  Rng rng(derive_seed(seed, 0x1b));
  shuffle_in_place(all, rng);
  IndexList out(all.begin(), all.begin() + count);
  std::sort(out.begin(), out.end());
  return out;
}

ImbalanceResult induce_imbalance(const Dataset& ds, const ImbalanceSpec& spec) {
  ds.validate();
  require(spec.retention_fraction > 0.0 && spec.retention_fraction <= 1.0,
          ErrorCode::InvalidArgument, "retention_fraction must lie in (0,1]");
  const int C = ds.num_classes();
  ImbalanceResult res;
  res.minoritized = select_minoritized_classes(C, spec.minoritized_class_count, spec.seed);
  const std::set<int> minor(res.minoritized.begin(), res.minoritized.end());

  // Per minoritized class, decide which train rows survive.
  Rng rng(derive_seed(spec.seed, 0x2c));
  std::vector<bool> keep(static_cast<std::size_t>(ds.size()), true);
  std::size_t removed = 0;
  for (int c : res.minoritized) {
    IndexList rows;
    for (Index i = 0; i < ds.size(); ++i) {
      if (ds.split[i] == Split::Train && ds.classes[i] == c) rows.push_back(static_cast<int>(i));
    }
    const auto retain = static_cast<std::size_t>(
        std::ceil(spec.retention_fraction * static_cast<double>(rows.size()) - 1e-9));
    require(retain >= 1, ErrorCode::RetentionTooSmall,
            "class " + std::to_string(c) + " would keep no train samples");
    shuffle_in_place(rows, rng);
    for (std::size_t r = retain; r < rows.size(); ++r) {
      keep[static_cast<std::size_t>(rows[r])] = false;
      ++removed;
    }
  }

  IndexList rows;
  for (Index i = 0; i < ds.size(); ++i) {
    if (keep[static_cast<std::size_t>(i)]) rows.push_back(static_cast<int>(i));
  }
  if (spec.rebalance_majority && removed > 0) {
    IndexList pool;
    for (Index i = 0; i < ds.size(); ++i) {
      if (ds.split[i] == Split::Train && !minor.count(ds.classes[i])) pool.push_back(static_cast<int>(i));
    }
    require(!pool.empty(), ErrorCode::InvalidArgument, "no majoritized train rows to duplicate");
    for (std::size_t r = 0; r < removed; ++r) rows.push_back(pool[uniform_index(rng, pool.size())]);
  }
  res.dataset = ds.subset(rows);
  return res;
}

Dataset split_per_class(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  ds.validate();
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::InvalidArgument,
          "train_fraction must lie in (0,1)");
  Dataset out = ds;
  Rng rng(seed);
  const int C = ds.num_classes();
  std::vector<IndexList> by_class(static_cast<std::size_t>(C));
  for (Index i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.classes[i])].push_back(static_cast<int>(i));
  for (int c = 0; c < C; ++c) {
    IndexList& rows = by_class[static_cast<std::size_t>(c)];
    require(rows.size() >= 2, ErrorCode::ClassTooSmall, "class " + std::to_string(c));
    shuffle_in_place(rows, rng);
    const auto count = static_cast<long long>(rows.size());
    long long n_train = static_cast<long long>(std::floor(train_fraction * static_cast<double>(count) + 1e-9));
    n_train = std::clamp(n_train, 1LL, count - 1);
    for (long long r = 0; r < count; ++r) {
      out.split[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])] = r < n_train ? Split::Train : Split::Test;
    }
  }
  return out;
}

SubgroupPartition partition_by_values(const IndexList& values) {
  SubgroupPartition p;
  for (std::size_t i = 0; i < values.size(); ++i) p.groups[values[i]].push_back(static_cast<int>(i));
  return p;
}

SubgroupPartition partition_by_attribute(const Dataset& ds, Split split) {
  const IndexList rows = ds.indices(split);
  require(!rows.empty(), ErrorCode::InvalidArgument, "split is empty");
  IndexList values;
  values.reserve(rows.size());
  for (int r : rows) values.push_back(ds.attributes[static_cast<std::size_t>(r)]);
  return partition_by_values(values);
}

std::string_view to_string(Fitzpatrick f) {
  switch (f) {
    case Fitzpatrick::I: return "I";
    case Fitzpatrick::II: return "II";
    case Fitzpatrick::III: return "III";
    case Fitzpatrick::IV: return "IV";
    case Fitzpatrick::V: return "V";
    case Fitzpatrick::VI: return "VI";
  }
  return "?";
}

double individual_typology_angle(const LabPatch& p) {
  return std::atan((p.L - 50.0) / p.b) * 180.0 / std::numbers::pi;
}

Fitzpatrick fitzpatrick_category(double mean_ita) {
  if (mean_ita >= 50.0) return Fitzpatrick::I;
  if (mean_ita >= 40.0) return Fitzpatrick::II;
  if (mean_ita >= 30.0) return Fitzpatrick::III;
  if (mean_ita >= 20.0) return Fitzpatrick::IV;
  if (mean_ita >= 10.0) return Fitzpatrick::V;
  return Fitzpatrick::VI;
}

ItaResult ita_fitzpatrick(const std::vector<LabPatch>& patches) {
  require(!patches.empty(), ErrorCode::InvalidArgument, "no patches");
  double sum = 0.0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    require(std::abs(patches[i].b) > 1e-9, ErrorCode::DegenerateYellowChannel, "patch " + std::to_string(i));
    sum += individual_typology_angle(patches[i]);
  }
  ItaResult r;
  r.mean_ita = sum / static_cast<double>(patches.size());
  r.category = fitzpatrick_category(r.mean_ita);
  return r;
}

}  // namespace findml
