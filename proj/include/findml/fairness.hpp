#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "findml/core_math.hpp"
#include "findml/data.hpp"
#include "findml/metrics.hpp"

namespace findml {

using SubgroupValues = std::map<int, double>;

/// Per subgroup: Pr over its members that the k nearest neighbours (searched
/// over every row) contain a same-class row.
SubgroupValues k_close_profile(const DistanceMatrix& dist, std::span<const int> classes,
                               const SubgroupPartition& partition, int k);
SubgroupValues k_close_profile(const EmbeddingMatrix& emb, std::span<const int> classes,
                               const SubgroupPartition& partition, int k);

/// Alignment expectations over the attribute-filtered pair sets.
std::map<int, Alignment> alignment_profile(const EmbeddingMatrix& emb, std::span<const int> classes,
                                           std::span<const int> attributes,
                                           std::size_t max_pairs = kDefaultMaxPairs, std::uint64_t seed = 0);

SubgroupValues uniformity_profile(const EmbeddingMatrix& emb, const SubgroupPartition& partition);

/// NMI restricted to each subgroup; clusters come from the full set.
SubgroupValues nmi_profile(std::span<const int> clusters, std::span<const int> classes,
                           const SubgroupPartition& partition, NmiForm form = NmiForm::Symmetric);

enum class Polarity { HigherBetter, LowerBetter, AbsoluteDifference };

/// recall*, nmi, accuracy, precision -> higher; u_kl -> lower; alignment* -> absolute.
Polarity polarity_of(std::string_view metric);

enum class GapConvention { MajorityVsMinority, WorstGroup, TopHalfVsBottomHalf };

std::string_view to_string(GapConvention c);
GapConvention parse_gap_convention(std::string_view s);

/// majority_vs_minority: value(largest group) - value(smallest group); size
/// ties resolve to the lower id for the largest and the higher id for the
/// smallest. worst_group: mean of the other groups minus the worst group.
/// top_half_vs_bottom_half: mean of the better floor(g/2) groups minus the
/// worse floor(g/2) (a middle group is dropped when g is odd). The last two
/// are oriented so a positive gap always disadvantages the worse groups;
/// absolute-difference metrics use max - min there.
double compute_gap(const SubgroupValues& values, GapConvention convention,
                   const std::map<int, std::size_t>& sizes, Polarity polarity);

struct GapReport {
  std::string metric;
  GapConvention convention = GapConvention::WorstGroup;
  SubgroupValues per_subgroup;
  double gap_mean = 0.0;
  double gap_std = 0.0;
  int n_seeds = 1;
};

GapReport make_gap_report(const std::string& metric, const SubgroupValues& values, GapConvention convention,
                          const std::map<int, std::size_t>& sizes);

/// Mean per-subgroup values, mean gap and unbiased sample std of the gap.
GapReport aggregate_over_seeds(const std::vector<GapReport>& runs);

double mean_of(std::vector<double> values);
double sample_std(std::vector<double> values);

nlohmann::json to_json(const GapReport& r);
GapReport gap_report_from_json(const nlohmann::json& j);

std::map<int, std::size_t> subgroup_sizes(const SubgroupPartition& partition);

}  // namespace findml
