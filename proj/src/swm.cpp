#include "swm/swm.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "swm/parallel.h"

namespace swm {

using nlohmann::json;

std::string to_string(Pooling p) {
    return p == Pooling::FlattenAll ? "flatten-all-tokens" : "final-token";
}

std::string to_string(CommitPolicy p) {
    return p == CommitPolicy::LastValid ? "last-valid" : "as-written";
}

Pooling parse_pooling(const std::string& text) {
    if (text == "flatten-all-tokens" || text == "flatten") return Pooling::FlattenAll;
    if (text == "final-token") return Pooling::FinalToken;
    throw ConfigError("unknown pooling mode '" + text + "'");
}

CommitPolicy parse_policy(const std::string& text) {
    if (text == "last-valid") return CommitPolicy::LastValid;
    if (text == "as-written") return CommitPolicy::AsWritten;
    throw ConfigError("unknown commit policy '" + text + "'");
}

std::string to_string(StepDecision d) {
    switch (d) {
        case StepDecision::Expand: return "expand";
        case StepDecision::Commit: return "commit";
        case StepDecision::RejectSlide: return "reject-slide";
    }
    return "unknown";
}

namespace {

StepDecision parse_decision(const std::string& text) {
    if (text == "expand") return StepDecision::Expand;
    if (text == "commit") return StepDecision::Commit;
    if (text == "reject-slide") return StepDecision::RejectSlide;
    throw PlanError("unknown step decision '" + text + "'");
}

}  // namespace

SwmConfig SwmConfig::defaults_for(const Model& model) {
    SwmConfig cfg;
    const std::size_t n = model.layers.size();
    cfg.lo_bound = 2;
    cfg.hi_bound = n >= 2 ? static_cast<std::uint32_t>(n - 2) : 0;
    return cfg;
}

void SwmConfig::validate(const Model& model) const {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold must lie strictly between 0 and 1");
    }
    if (lo_bound >= hi_bound) throw ConfigError("protected range needs lo < hi");
    if (!position_of(model, lo_bound) || !position_of(model, hi_bound)) {
        throw ConfigError("protected range [" + std::to_string(lo_bound) + ", " +
                          std::to_string(hi_bound) + "] does not name layers of the model");
    }
}

std::size_t MergePlan::removed_layers() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size() - 1;
    return n;
}

SimilarityReference::SimilarityReference(const Model& original, const CalibSet& calib,
                                         Pooling pooling, std::size_t workers)
    : calib_(calib), pooling_(pooling), workers_(workers) {
    if (calib_.sequences.empty()) throw InputError("similarity: empty calibration set");
    reference_.resize(calib_.sequences.size());
    parallel_for(reference_.size(), workers_,
                 [&](std::size_t i) { reference_[i] = summarize(original, i); });
}

std::vector<float> SimilarityReference::summarize(const Model& model, std::size_t seq) const {
    const Matrix h = last_hidden(model, calib_.sequences[seq]);
    if (pooling_ == Pooling::FinalToken) {
        const auto last = h.row(h.rows() - 1);
        return {last.begin(), last.end()};
    }
    return {h.flat().begin(), h.flat().end()};
}

double SimilarityReference::score(const Model& candidate) const {
    std::vector<double> sims(reference_.size());
    parallel_for(reference_.size(), workers_, [&](std::size_t i) {
        sims[i] = cosine(reference_[i], summarize(candidate, i));
    });
    double sum = 0.0;
    for (double s : sims) sum += s;
    return sum / static_cast<double>(sims.size());
}

double cal_sim(const Model& original, const Model& candidate, const CalibSet& calib,
               Pooling pooling, std::size_t workers) {
    if (original.config.d_model != candidate.config.d_model ||
        original.config.vocab_size != candidate.config.vocab_size) {
        throw ShapeError("cal_sim: models differ in d_model or vocab");
    }
    return SimilarityReference(original, calib, pooling, workers).score(candidate);
}

SwmResult run_swm(const Model& model, const SwmConfig& cfg, const CalibSet& calib) {
    cfg.validate(model);
    calib.validate(model.config);
    const SimilarityReference reference(model, calib, cfg.pooling, cfg.workers);

    // Labels eligible for merging, ascending. Window ends index into this list.
    std::vector<std::uint32_t> labels;
    for (const auto& l : model.layers)
        if (l.original_index >= cfg.lo_bound && l.original_index <= cfg.hi_bound)
            labels.push_back(l.original_index);

    SwmResult out;
    out.model = model;
    // Original labels covered by each surviving label (as-written commits nest).
    std::map<std::uint32_t, std::vector<std::uint32_t>> coverage;
    for (auto lab : labels) coverage[lab] = {lab};

    struct Pending {
        Model model;
        std::size_t lo;
        double similarity;
    };
    std::optional<Pending> last_valid;

    auto commit = [&](Model merged, std::size_t lo, std::size_t hi) {
        out.model = std::move(merged);
        std::vector<std::uint32_t> covered;
        for (std::size_t i = lo; i <= hi; ++i) {
            auto it = coverage.find(labels[i]);
            if (it == coverage.end()) continue;
            covered.insert(covered.end(), it->second.begin(), it->second.end());
            coverage.erase(it);
        }
        std::sort(covered.begin(), covered.end());
        coverage[labels[lo]] = std::move(covered);
    };

    if (labels.size() >= 2) {
        std::size_t h = labels.size() - 1;
        std::ptrdiff_t l = static_cast<std::ptrdiff_t>(h) - 1;
        while (l >= 0) {
            const auto li = static_cast<std::size_t>(l);
            Model candidate = apply_label_merge(out.model, labels[li], labels[h], cfg.strategy);
            const double s = reference.score(candidate);
            ++out.log.iterations;
            SwmStep step{labels[li], labels[h], s, StepDecision::Expand, std::nullopt};
            if (s > cfg.threshold) {
                if (cfg.policy == CommitPolicy::LastValid)
                    last_valid = Pending{std::move(candidate), li, s};
                out.log.steps.push_back(step);
                --l;
                continue;
            }
            if (cfg.policy == CommitPolicy::LastValid) {
                if (last_valid) {
                    step.decision = StepDecision::Commit;
                    step.committed = std::make_pair(labels[last_valid->lo], labels[h]);
                    commit(std::move(last_valid->model), last_valid->lo, h);
                    last_valid.reset();
                } else {
                    step.decision = StepDecision::RejectSlide;
                }
            } else {
                step.decision = StepDecision::Commit;
                step.committed = std::make_pair(labels[li], labels[h]);
                commit(std::move(candidate), li, h);
            }
            out.log.steps.push_back(step);
            h = li;
            l = static_cast<std::ptrdiff_t>(h) - 1;
        }
        if (last_valid) {
            SwmStep step{labels[last_valid->lo], labels[h], last_valid->similarity,
                         StepDecision::Commit, std::make_pair(labels[last_valid->lo], labels[h])};
            out.log.steps.push_back(step);
            commit(std::move(last_valid->model), last_valid->lo, h);
        }
    }

    for (auto it = coverage.rbegin(); it != coverage.rend(); ++it)
        if (it->second.size() >= 2) out.plan.groups.push_back(it->second);
    out.log.final_layer_count = out.model.layers.size();
    return out;
}

ThresholdSearchResult find_threshold(const Model& model, const CalibSet& calib,
                                     std::size_t target_layers, const std::vector<double>& grid,
                                     const SwmConfig& cfg_template) {
    if (grid.empty()) throw ConfigError("threshold grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw ConfigError("threshold grid must be sorted ascending");
    }
    if (target_layers < 1) throw ConfigError("target layer count must be >= 1");
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
        SwmConfig cfg = cfg_template;
        cfg.threshold = *it;
        SwmResult r = run_swm(model, cfg, calib);
        if (r.model.layers.size() <= target_layers) return {*it, std::move(r)};
    }
    throw InfeasibleError("no threshold in the grid reaches " + std::to_string(target_layers) +
                          " layers");
}

Model replay_plan(const Model& original, const MergePlan& plan, MergeStrategy strategy) {
    Model m = original;
    for (const auto& g : plan.groups) {
        if (g.size() < 2) throw PlanError("plan group with fewer than 2 layers");
        m = apply_label_merge(m, g.front(), g.back(), strategy);
    }
    return m;
}

Model replay_log(const Model& original, const SwmLog& log, MergeStrategy strategy) {
    Model m = original;
    for (const auto& s : log.steps)
        if (s.committed) m = apply_label_merge(m, s.committed->first, s.committed->second, strategy);
    return m;
}

std::vector<double> gate_similarities(const Model& original, const MergePlan& plan,
                                      MergeStrategy strategy, const CalibSet& calib,
                                      Pooling pooling, std::size_t workers) {
    const SimilarityReference reference(original, calib, pooling, workers);
    std::vector<double> out;
    Model m = original;
    for (const auto& g : plan.groups) {
        m = apply_label_merge(m, g.front(), g.back(), strategy);
        out.push_back(reference.score(m));
    }
    return out;
}

std::string format_groups(const MergePlan& plan) {
    std::string out = "[";
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        if (g) out += ", ";
        out += "[";
        for (std::size_t i = 0; i < plan.groups[g].size(); ++i) {
            if (i) out += ", ";
            out += std::to_string(plan.groups[g][i]);
        }
        out += "]";
    }
    return out + "]";
}

void validate_plan(const MergePlan& plan, std::optional<std::uint32_t> lo,
                   std::optional<std::uint32_t> hi) {
    std::set<std::uint32_t> seen;
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        const auto& grp = plan.groups[g];
        const std::string where = "group " + std::to_string(g);
        if (grp.size() < 2) throw PlanError(where + " has fewer than 2 layers");
        for (std::size_t i = 1; i < grp.size(); ++i) {
            if (grp[i] != grp[i - 1] + 1) throw PlanError(where + " is not contiguous");
        }
        for (auto id : grp) {
            if (!seen.insert(id).second) {
                throw PlanError(where + " overlaps another group at layer " + std::to_string(id));
            }
        }
        if (lo && grp.front() < *lo) throw PlanError(where + " reaches below the protected range");
        if (hi && grp.back() > *hi) throw PlanError(where + " reaches above the protected range");
        if (g > 0 && grp.front() >= plan.groups[g - 1].front()) {
            throw PlanError(where + " is out of order (groups must descend by start)");
        }
    }
}

PlanFile make_plan_file(const SwmResult& result, const SwmConfig& cfg) {
    PlanFile f;
    f.plan = result.plan;
    f.threshold = cfg.threshold;
    f.strategy = cfg.strategy;
    f.policy = cfg.policy;
    f.pooling = cfg.pooling;
    f.lo_bound = cfg.lo_bound;
    f.hi_bound = cfg.hi_bound;
    f.steps = result.log.steps;
    f.final_layer_count = result.log.final_layer_count;
    return f;
}

std::string plan_to_json(const PlanFile& plan) {
    json doc;
    doc["groups"] = plan.plan.groups;
    doc["threshold"] = plan.threshold;
    doc["strategy"] = to_string(plan.strategy);
    doc["policy"] = to_string(plan.policy);
    doc["pooling"] = to_string(plan.pooling);
    if (plan.lo_bound) doc["lo_bound"] = *plan.lo_bound;
    if (plan.hi_bound) doc["hi_bound"] = *plan.hi_bound;
    doc["final_layer_count"] = plan.final_layer_count;
    json steps = json::array();
    for (const auto& s : plan.steps) {
        json js;
        js["window"] = {s.lo, s.hi};
        js["similarity"] = s.similarity;
        js["decision"] = to_string(s.decision);
        if (s.committed) js["committed"] = {s.committed->first, s.committed->second};
        steps.push_back(std::move(js));
    }
    doc["steps"] = std::move(steps);
    return doc.dump(2) + "\n";
}

PlanFile plan_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw PlanError(std::string("malformed plan JSON: ") + e.what());
    }
    PlanFile f;
    try {
        if (!doc.is_object()) throw PlanError("plan JSON must be an object");
        for (const char* key : {"groups", "threshold", "strategy"})
            if (!doc.contains(key)) throw PlanError(std::string("plan JSON lacks '") + key + "'");
        f.plan.groups = doc.at("groups").get<std::vector<std::vector<std::uint32_t>>>();
        f.threshold = doc.at("threshold").get<double>();
        f.strategy = parse_strategy(doc.at("strategy").get<std::string>());
        f.policy = parse_policy(doc.value("policy", std::string("last-valid")));
        f.pooling = parse_pooling(doc.value("pooling", std::string("flatten-all-tokens")));
        if (doc.contains("lo_bound")) f.lo_bound = doc.at("lo_bound").get<std::uint32_t>();
        if (doc.contains("hi_bound")) f.hi_bound = doc.at("hi_bound").get<std::uint32_t>();
        f.final_layer_count = doc.value("final_layer_count", std::size_t{0});
        if (doc.contains("steps")) {
            for (const auto& js : doc.at("steps")) {
                SwmStep s;
                const auto w = js.at("window").get<std::vector<std::uint32_t>>();
                if (w.size() != 2) throw PlanError("step window must have two entries");
                s.lo = w[0];
                s.hi = w[1];
                s.similarity = js.at("similarity").get<double>();
                s.decision = parse_decision(js.at("decision").get<std::string>());
                if (js.contains("committed")) {
                    const auto c = js.at("committed").get<std::vector<std::uint32_t>>();
                    if (c.size() != 2) throw PlanError("committed window must have two entries");
                    s.committed = std::make_pair(c[0], c[1]);
                }
                f.steps.push_back(s);
            }
        }
    } catch (const json::exception& e) {
        throw PlanError(std::string("malformed plan JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw PlanError(e.what());
    }
    if (f.policy == CommitPolicy::LastValid) validate_plan(f.plan, f.lo_bound, f.hi_bound);
    return f;
}

void save_plan(const PlanFile& plan, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << plan_to_json(plan);
    if (!os) throw IoError("failed writing '" + path + "'");
}

PlanFile load_plan(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return plan_from_json(ss.str());
}

}  // namespace swm
