#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swm/merge.h"
#include "swm/model.h"

namespace swm {

enum class Pooling { FlattenAll, FinalToken };
enum class CommitPolicy { LastValid, AsWritten };

std::string to_string(Pooling p);
std::string to_string(CommitPolicy p);
Pooling parse_pooling(const std::string& text);
CommitPolicy parse_policy(const std::string& text);

struct SwmConfig {
    double threshold = 0.9;
    std::uint32_t lo_bound = 2;
    std::uint32_t hi_bound = 0;
    MergeStrategy strategy = MergeStrategy::Diff;
    Pooling pooling = Pooling::FlattenAll;
    CommitPolicy policy = CommitPolicy::LastValid;
    std::size_t workers = 1;

    // lo = 2, hi = n_layers - 2: the bottom two and the top layer are protected.
    static SwmConfig defaults_for(const Model& model);
    void validate(const Model& model) const;
};

// Merge groups in original-index space, each ascending and contiguous,
// listed in discovery order (descending by start).
struct MergePlan {
    std::vector<std::vector<std::uint32_t>> groups;

    // Number of layers the plan removes.
    std::size_t removed_layers() const;
    friend bool operator==(const MergePlan&, const MergePlan&) = default;
};

enum class StepDecision { Expand, Commit, RejectSlide };
std::string to_string(StepDecision d);

struct SwmStep {
    std::uint32_t lo = 0;  // window tried, original ids
    std::uint32_t hi = 0;
    double similarity = 0.0;
    StepDecision decision = StepDecision::Expand;
    // Window that was folded into the output model by this step, if any.
    std::optional<std::pair<std::uint32_t, std::uint32_t>> committed;

    friend bool operator==(const SwmStep&, const SwmStep&) = default;
};

struct SwmLog {
    std::vector<SwmStep> steps;
    std::size_t iterations = 0;  // similarity evaluations
    std::size_t final_layer_count = 0;

    friend bool operator==(const SwmLog&, const SwmLog&) = default;
};

struct SwmResult {
    Model model;
    MergePlan plan;
    SwmLog log;
};

// Last-hidden-state summaries of a reference model, reused across many
// similarity queries against candidates.
class SimilarityReference {
public:
    SimilarityReference(const Model& original, const CalibSet& calib, Pooling pooling,
                        std::size_t workers = 1);

    // Mean over sequences of the cosine between reference and candidate summaries.
    double score(const Model& candidate) const;

private:
    std::vector<float> summarize(const Model& model, std::size_t seq) const;

    CalibSet calib_;
    Pooling pooling_;
    std::size_t workers_;
    std::vector<std::vector<float>> reference_;
};

double cal_sim(const Model& original, const Model& candidate, const CalibSet& calib,
               Pooling pooling = Pooling::FlattenAll, std::size_t workers = 1);

SwmResult run_swm(const Model& model, const SwmConfig& cfg, const CalibSet& calib);

struct ThresholdSearchResult {
    double threshold = 0.0;
    SwmResult result;
};

// Largest grid value whose run reaches at most `target_layers` layers.
// `grid` must be non-empty and ascending.
ThresholdSearchResult find_threshold(const Model& model, const CalibSet& calib,
                                     std::size_t target_layers, const std::vector<double>& grid,
                                     const SwmConfig& cfg_template);

// Applies the plan's groups in order with the given strategy.
Model replay_plan(const Model& original, const MergePlan& plan, MergeStrategy strategy);
// Applies every committed window from the log in order (needed for the
// as-written policy, whose commits can nest).
Model replay_log(const Model& original, const SwmLog& log, MergeStrategy strategy);

// Cumulative similarity after each group of the plan is applied.
std::vector<double> gate_similarities(const Model& original, const MergePlan& plan,
                                      MergeStrategy strategy, const CalibSet& calib,
                                      Pooling pooling, std::size_t workers = 1);

// "[[25, 26, 27], [10, 11]]"
std::string format_groups(const MergePlan& plan);

// Throws PlanError on singleton, non-contiguous, overlapping or unordered
// groups, or groups outside [lo, hi] when bounds are given.
void validate_plan(const MergePlan& plan, std::optional<std::uint32_t> lo = std::nullopt,
                   std::optional<std::uint32_t> hi = std::nullopt);

struct PlanFile {
    MergePlan plan;
    double threshold = 0.0;
    MergeStrategy strategy = MergeStrategy::Diff;
    CommitPolicy policy = CommitPolicy::LastValid;
    Pooling pooling = Pooling::FlattenAll;
    std::optional<std::uint32_t> lo_bound;
    std::optional<std::uint32_t> hi_bound;
    std::vector<SwmStep> steps;
    std::size_t final_layer_count = 0;
};

PlanFile make_plan_file(const SwmResult& result, const SwmConfig& cfg);
std::string plan_to_json(const PlanFile& plan);
PlanFile plan_from_json(const std::string& text);
void save_plan(const PlanFile& plan, const std::string& path);
PlanFile load_plan(const std::string& path);

}  // namespace swm
