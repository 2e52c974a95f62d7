#include "msreid/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "msreid/errors.hpp"
#include "msreid/parallel.hpp"
#include "msreid/util.hpp"

namespace msreid {

RetrievalResult rank(const std::vector<Vec>& query_reps, const std::vector<Vec>& gallery_reps,
                     const std::vector<long>& gallery_record_ids) {
    if (gallery_reps.empty()) throw ParameterError("rank: empty gallery");
    if (gallery_record_ids.size() != gallery_reps.size())
        throw ShapeError("rank: gallery ids misaligned");
    RetrievalResult res;
    res.ranking.assign(query_reps.size(), {});
    parallel_for(query_reps.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            std::vector<double> sim(gallery_reps.size());
            for (std::size_t j = 0; j < gallery_reps.size(); ++j)
                sim[j] = dot(query_reps[q], gallery_reps[j]);
            std::vector<int> order(gallery_reps.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int x, int y) {
                if (sim[x] != sim[y]) return sim[x] > sim[y];
                return gallery_record_ids[x] < gallery_record_ids[y];
            });
            res.ranking[q] = std::move(order);
        }
    });
    return res;
}

RetrievalMetrics map_cmc(const RetrievalResult& result,
                         const std::vector<std::vector<char>>& relevance) {
    if (relevance.size() != result.ranking.size())
        throw ShapeError("map_cmc: relevance misaligned with rankings");
    RetrievalMetrics m;
    double ap_sum = 0.0;
    long hit1 = 0, hit5 = 0, hit10 = 0;
    for (std::size_t q = 0; q < result.ranking.size(); ++q) {
        const auto& order = result.ranking[q];
        const auto& rel = relevance[q];
        int total_rel = 0;
        for (int g : order) {
            if (g < 0 || static_cast<std::size_t>(g) >= rel.size())
                throw ShapeError("map_cmc: ranking index out of range");
            total_rel += rel[g] != 0;
        }
        if (total_rel == 0) {
            ++m.queries_skipped;
            continue;
        }
        int seen_rel = 0;
        int first_hit = -1;
        double ap = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (rel[order[r]]) {
                ++seen_rel;
                ap += static_cast<double>(seen_rel) / static_cast<double>(r + 1);
                if (first_hit < 0) first_hit = static_cast<int>(r);
            }
        }
        ap /= total_rel;
        ap_sum += ap;
        hit1 += first_hit < 1;
        hit5 += first_hit < 5;
        hit10 += first_hit < 10;
        ++m.queries_used;
    }
    if (m.queries_skipped > 0)
        std::fprintf(stderr, "warning: %d queries had no relevant gallery record and were skipped\n",
                     m.queries_skipped);
    if (m.queries_used > 0) {
        m.map = ap_sum / m.queries_used;
        m.rank1 = static_cast<double>(hit1) / m.queries_used;
        m.rank5 = static_cast<double>(hit5) / m.queries_used;
        m.rank10 = static_cast<double>(hit10) / m.queries_used;
    }
    return m;
}

EvalReport evaluate(const GroupedView& test_view, const std::vector<Vec>& reps,
                    const std::vector<long>& truth) {
    if (reps.size() != test_view.items.size() || truth.size() != test_view.items.size())
        throw ShapeError("evaluate: reps/truth misaligned with view");

    EvalReport report;
    double pooled_ap_sum = 0.0;
    long pooled_used = 0, pooled_skipped = 0;
    long pooled_hit1 = 0, pooled_hit5 = 0, pooled_hit10 = 0;

    for (std::size_t s = 0; s < test_view.blocks.size(); ++s) {
        ScenarioEval se;
        se.scenario_id = test_view.scenario_ids[s];
        const auto& galleries = test_view.blocks[s][0];
        const auto& queries = test_view.blocks[s][1];
        if (galleries.empty() || queries.empty()) {
            std::fprintf(stderr,
                         "warning: scenario %d lacks a query or gallery side; metrics zeroed\n",
                         se.scenario_id);
            report.scenarios.push_back(se);
            continue;
        }
        std::vector<Vec> q_reps, g_reps;
        std::vector<long> g_ids;
        for (int item : queries) q_reps.push_back(reps[item]);
        for (int item : galleries) {
            g_reps.push_back(reps[item]);
            g_ids.push_back(test_view.items[item].record_id);
        }
        auto ranking = rank(q_reps, g_reps, g_ids);
        std::vector<std::vector<char>> rel(queries.size(),
                                           std::vector<char>(galleries.size(), 0));
        for (std::size_t q = 0; q < queries.size(); ++q)
            for (std::size_t g = 0; g < galleries.size(); ++g)
                rel[q][g] = truth[queries[q]] == truth[galleries[g]];
        se.metrics = map_cmc(ranking, rel);
        report.scenarios.push_back(se);

        // Pool per-query statistics for the overall row.
        pooled_used += se.metrics.queries_used;
        pooled_skipped += se.metrics.queries_skipped;
        pooled_ap_sum += se.metrics.map * se.metrics.queries_used;
        pooled_hit1 += std::lround(se.metrics.rank1 * se.metrics.queries_used);
        pooled_hit5 += std::lround(se.metrics.rank5 * se.metrics.queries_used);
        pooled_hit10 += std::lround(se.metrics.rank10 * se.metrics.queries_used);
    }

    report.overall.scenario_id = -1;
    report.overall.metrics.queries_used = static_cast<int>(pooled_used);
    report.overall.metrics.queries_skipped = static_cast<int>(pooled_skipped);
    if (pooled_used > 0) {
        report.overall.metrics.map = pooled_ap_sum / static_cast<double>(pooled_used);
        report.overall.metrics.rank1 = static_cast<double>(pooled_hit1) / pooled_used;
        report.overall.metrics.rank5 = static_cast<double>(pooled_hit5) / pooled_used;
        report.overall.metrics.rank10 = static_cast<double>(pooled_hit10) / pooled_used;
    }
    return report;
}

namespace {
nlohmann::json to_json(const ScenarioEval& se) {
    return {{"scenario_id", se.scenario_id},
            {"mAP", se.metrics.map},
            {"rank1", se.metrics.rank1},
            {"rank5", se.metrics.rank5},
            {"rank10", se.metrics.rank10},
            {"queries", se.metrics.queries_used},
            {"skipped_queries", se.metrics.queries_skipped}};
}
}  // namespace

void EvalReport::save(const std::string& path) const {
    nlohmann::json j;
    j["scenarios"] = nlohmann::json::array();
    for (const auto& se : scenarios) j["scenarios"].push_back(to_json(se));
    j["overall"] = to_json(overall);
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace msreid
