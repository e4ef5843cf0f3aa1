#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "findml/core_math.hpp"

namespace findml {

enum class Split : std::uint8_t { Train, Test };

std::string_view to_string(Split s);

/// Feature rows with a class label, a sensitive attribute and a split tag.
struct Dataset {
  Matrix features;
  IndexList classes;
  IndexList attributes;
  std::vector<Split> split;
  /// Source sample id; rows duplicated by rebalancing keep their source id.
  std::vector<std::int64_t> ids;

  Index size() const noexcept { return features.rows(); }
  Index feature_dim() const noexcept { return features.cols(); }
  int num_classes() const;
  int num_attributes() const;

  /// Row indices carrying `s`, in dataset order.
  IndexList indices(Split s) const;
  Dataset subset(const IndexList& rows) const;
  IndexList class_counts(Split s) const;

  /// Throws InvalidArgument when the arrays disagree in length or a class
  /// id in [0, C) never occurs.
  void validate() const;
};

/// Attribute value -> positions. Positions index the rows of the split the
/// partition was built from (the order of `Dataset::indices(split)`).
struct SubgroupPartition {
  std::map<int, IndexList> groups;

  std::size_t total() const;
};

struct SyntheticSpec {
  int classes = 20;
  int per_class = 40;
  int feature_dim = 32;
  /// 1: attribute fully determined by the class half; 0: independent coin.
  double attribute_correlation = 0.0;
  /// Isotropic noise standard deviation around each class center.
  double cluster_spread = 0.35;
  /// Attribute shift along a fixed direction, in units of cluster_spread.
  double attribute_shift = 1.0;
  std::uint64_t seed = 0;
};

/// Class-linked attribute used by the synthetic generator: 0 for the first
/// half of the classes, 1 for the rest.
inline int linked_attribute(int cls, int num_classes) { return cls < num_classes / 2 ? 0 : 1; }

Dataset generate_synthetic(const SyntheticSpec& spec);

struct ImbalanceSpec {
  int minoritized_class_count = 50;
  double retention_fraction = 0.10;
  bool rebalance_majority = true;
  std::uint64_t seed = 0;
};

struct ImbalanceResult {
  Dataset dataset;
  IndexList minoritized;  // sorted class ids
};

/// Uniformly random class subset; depends only on (C, count, seed).
IndexList select_minoritized_classes(int num_classes, int count, std::uint64_t seed);

/// Subsamples the train rows of the minoritized classes to
/// ceil(retention * count) and, optionally, tops the train split back up to
/// its original size with with-replacement duplicates of majoritized rows.
/// Test rows are never touched.
ImbalanceResult induce_imbalance(const Dataset& ds, const ImbalanceSpec& spec);

/// Per class: floor(train_fraction * count) rows tagged train (clamped so each
/// class keeps at least one train and one test row).
Dataset split_per_class(const Dataset& ds, double train_fraction, std::uint64_t seed);

SubgroupPartition partition_by_attribute(const Dataset& ds, Split split);
SubgroupPartition partition_by_values(const IndexList& values);

// Fitzpatrick skin tone from CIELab patches.

struct LabPatch {
  double L = 0.0;
  double b = 0.0;
};

enum class Fitzpatrick { I = 1, II, III, IV, V, VI };

std::string_view to_string(Fitzpatrick f);
double individual_typology_angle(const LabPatch& p);
Fitzpatrick fitzpatrick_category(double mean_ita);

struct ItaResult {
  double mean_ita = 0.0;
  Fitzpatrick category = Fitzpatrick::VI;
};

ItaResult ita_fitzpatrick(const std::vector<LabPatch>& patches);

// CSV IO.

/// Header `id,split,class,attribute,f0,...`.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

struct EmbeddingDump {
  std::vector<std::int64_t> ids;
  IndexList classes;
  IndexList attributes;
  EmbeddingMatrix embeddings;
};

/// Header `id,class,attribute,e0,...`; rows must be unit norm (1e-6).
void write_embeddings(const std::filesystem::path& path, const EmbeddingDump& dump);
EmbeddingDump read_embeddings(const std::filesystem::path& path);

}  // namespace findml
