#include "findml/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace findml {

namespace {

void require_nonempty(const SubgroupPartition& partition) {
  for (const auto& [a, rows] : partition.groups) {
    require(!rows.empty(), ErrorCode::EmptySubgroup, "attribute " + std::to_string(a));
  }
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

SubgroupValues k_close_profile(const DistanceMatrix& dist, std::span<const int> classes,
                               const SubgroupPartition& partition, int k) {
  require_nonempty(partition);
  const std::vector<bool> hits = neighbor_hits(dist, classes, k);
  SubgroupValues out;
  for (const auto& [a, rows] : partition.groups) {
    std::size_t good = 0;
    for (int r : rows) good += hits.at(static_cast<std::size_t>(r)) ? 1 : 0;
    out[a] = static_cast<double>(good) / static_cast<double>(rows.size());
  }
  return out;
}

SubgroupValues k_close_profile(const EmbeddingMatrix& emb, std::span<const int> classes,
                               const SubgroupPartition& partition, int k) {
  return k_close_profile(pairwise_distances(emb, DistanceMode::Euclidean), classes, partition, k);
}

std::map<int, Alignment> alignment_profile(const EmbeddingMatrix& emb, std::span<const int> classes,
                                           std::span<const int> attributes, std::size_t max_pairs,
                                           std::uint64_t seed) {
  std::map<int, Alignment> out;
  const std::set<int> values(attributes.begin(), attributes.end());
  for (int a : values) {
    out[a] = alignment_expectations(emb.values(), build_pair_index(classes, attributes, a, max_pairs, seed));
  }
  return out;
}

SubgroupValues uniformity_profile(const EmbeddingMatrix& emb, const SubgroupPartition& partition) {
  require_nonempty(partition);
  SubgroupValues out;
  for (const auto& [a, rows] : partition.groups) out[a] = u_kl(emb, &rows);
  return out;
}

SubgroupValues nmi_profile(std::span<const int> clusters, std::span<const int> classes,
                           const SubgroupPartition& partition, NmiForm form) {
  require_nonempty(partition);
  SubgroupValues out;
  for (const auto& [a, rows] : partition.groups) out[a] = nmi(clusters, classes, &rows, form);
  return out;
}

Polarity polarity_of(std::string_view metric) {
  if (starts_with(metric, "u_kl")) return Polarity::LowerBetter;
  if (starts_with(metric, "alignment")) return Polarity::AbsoluteDifference;
  return Polarity::HigherBetter;
}

std::string_view to_string(GapConvention c) {
  switch (c) {
    case GapConvention::MajorityVsMinority: return "majority_vs_minority";
    case GapConvention::WorstGroup: return "worst_group";
    case GapConvention::TopHalfVsBottomHalf: return "top_half_vs_bottom_half";
  }
  return "?";
}

GapConvention parse_gap_convention(std::string_view s) {
  for (GapConvention c : {GapConvention::MajorityVsMinority, GapConvention::WorstGroup,
                          GapConvention::TopHalfVsBottomHalf}) {
    if (s == to_string(c)) return c;
  }
  throw Error(ErrorCode::ConfigError, "unknown gap convention '" + std::string(s) + "'");
}

double compute_gap(const SubgroupValues& values, GapConvention convention,
                   const std::map<int, std::size_t>& sizes, Polarity polarity) {
  require(values.size() >= 2, ErrorCode::TooFewSubgroups, std::to_string(values.size()) + " subgroup(s)");

  if (convention == GapConvention::MajorityVsMinority) {
    auto size_of = [&](int a) {
      const auto it = sizes.find(a);
      require(it != sizes.end(), ErrorCode::InvalidArgument, "no size for subgroup " + std::to_string(a));
      return it->second;
    };
    int largest = values.begin()->first;
    for (const auto& [a, v] : values) {
      if (size_of(a) > size_of(largest)) largest = a;
    }
    std::optional<int> smallest;
    for (const auto& [a, v] : values) {
      if (a != largest && (!smallest || size_of(a) <= size_of(*smallest))) smallest = a;
    }
    const double d = values.at(largest) - values.at(*smallest);
    return polarity == Polarity::AbsoluteDifference ? std::abs(d) : d;
  }

  std::vector<double> v;
  for (const auto& [a, x] : values) v.push_back(x);
  if (polarity == Polarity::AbsoluteDifference) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  }
  // Orient so that "better" sorts first.
  const double sign = polarity == Polarity::HigherBetter ? 1.0 : -1.0;
  std::sort(v.begin(), v.end(), [&](double a, double b) { return sign * a > sign * b; });

  if (convention == GapConvention::WorstGroup) {
    const double worst = v.back();
    v.pop_back();
    return sign * (mean_of(v) - worst);
  }
  const std::size_t h = v.size() / 2;
  const std::vector<double> top(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
  const std::vector<double> bottom(v.end() - static_cast<std::ptrdiff_t>(h), v.end());
  return sign * (mean_of(top) - mean_of(bottom));
}

GapReport make_gap_report(const std::string& metric, const SubgroupValues& values, GapConvention convention,
                          const std::map<int, std::size_t>& sizes) {
  GapReport r;
  r.metric = metric;
  r.convention = convention;
  r.per_subgroup = values;
  r.gap_mean = compute_gap(values, convention, sizes, polarity_of(metric));
  r.gap_std = 0.0;
  r.n_seeds = 1;
  return r;
}

double mean_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  // Sorted summation makes the result independent of input order.
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double x : values) s += x;
  return s / static_cast<double>(values.size());
}

double sample_std(std::vector<double> values) {
  if (values.size() < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0.0;  // the rounded mean would leave a tiny residual
  const double m = mean_of(values);
  std::vector<double> sq;
  for (double x : values) sq.push_back((x - m) * (x - m));
  std::sort(sq.begin(), sq.end());
  double s = 0.0;
  for (double x : sq) s += x;
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

GapReport aggregate_over_seeds(const std::vector<GapReport>& runs) {
  require(runs.size() >= 2, ErrorCode::InsufficientRuns, std::to_string(runs.size()) + " run(s)");
  GapReport out;
  out.metric = runs.front().metric;
  out.convention = runs.front().convention;
  std::vector<double> gaps;
  std::map<int, std::vector<double>> per;
  for (const GapReport& r : runs) {
    require(r.metric == out.metric && r.convention == out.convention, ErrorCode::InvalidArgument,
            "cannot aggregate different metrics or conventions");
    gaps.push_back(r.gap_mean);
    for (const auto& [a, v] : r.per_subgroup) per[a].push_back(v);
  }
  for (auto& [a, vs] : per) out.per_subgroup[a] = mean_of(vs);
  out.gap_mean = mean_of(gaps);
  out.gap_std = sample_std(gaps);
  out.n_seeds = static_cast<int>(runs.size());
  return out;
}

nlohmann::json to_json(const GapReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [a, v] : r.per_subgroup) per[std::to_string(a)] = v;
  return {{"metric", r.metric},       {"convention", std::string(to_string(r.convention))},
          {"per_subgroup", per},      {"gap_mean", r.gap_mean},
          {"gap_std", r.gap_std},     {"n_seeds", r.n_seeds}};
}

GapReport gap_report_from_json(const nlohmann::json& j) {
  try {
    GapReport r;
    r.metric = j.at("metric").get<std::string>();
    r.convention = parse_gap_convention(j.at("convention").get<std::string>());
    for (const auto& [k, v] : j.at("per_subgroup").items()) r.per_subgroup[std::stoi(k)] = v.get<double>();
    r.gap_mean = j.at("gap_mean").get<double>();
    r.gap_std = j.at("gap_std").get<double>();
    r.n_seeds = j.at("n_seeds").get<int>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("gap report: ") + e.what());
  }
}

std::map<int, std::size_t> subgroup_sizes(const SubgroupPartition& partition) {
  std::map<int, std::size_t> out;
  for (const auto& [a, rows] : partition.groups) out[a] = rows.size();
  return out;
}

}  // namespace findml
