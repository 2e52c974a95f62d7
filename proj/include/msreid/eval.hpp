#pragma once

#include <string>
#include <vector>

#include "msreid/grouping.hpp"
#include "msreid/numerics.hpp"

namespace msreid {

// Per query: gallery positions in descending cosine order, ties broken by
// lower gallery record_id.
struct RetrievalResult {
    std::vector<std::vector<int>> ranking;
};

RetrievalResult rank(const std::vector<Vec>& query_reps, const std::vector<Vec>& gallery_reps,
                     const std::vector<long>& gallery_record_ids);

struct RetrievalMetrics {
    double map = 0.0;
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    int queries_used = 0;
    int queries_skipped = 0;  // zero-relevant queries, excluded with a warning
};

// AP per query = mean over relevant ranks r of (relevant in top r) / r;
// mAP = mean AP over queries with at least one relevant record; CMC@n =
// fraction of those queries with a relevant record in the top n.
RetrievalMetrics map_cmc(const RetrievalResult& result,
                         const std::vector<std::vector<char>>& relevance);

struct ScenarioEval {
    int scenario_id = 0;  // -1 for the pooled overall row
    RetrievalMetrics metrics;
};

struct EvalReport {
    std::vector<ScenarioEval> scenarios;
    ScenarioEval overall;

    void save(const std::string& path) const;  // eval_report.json
};

// Cross-heterogeneous retrieval: per scenario, queries are the view's group-b
// records and the gallery its group-a records; relevance is truth-identity
// equality. truth aligns with test_view.items. The overall row pools every
// scenario's queries.
EvalReport evaluate(const GroupedView& test_view, const std::vector<Vec>& reps,
                    const std::vector<long>& truth);

}  // namespace msreid
