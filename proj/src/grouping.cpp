#include "msreid/grouping.hpp"

#include <algorithm>

#include "msreid/errors.hpp"

namespace msreid {

int GroupedView::scenario_index_of(int scenario_id) const {
    auto it = std::lower_bound(scenario_ids.begin(), scenario_ids.end(), scenario_id);
    if (it == scenario_ids.end() || *it != scenario_id)
        throw ParameterError("unknown scenario_id " + std::to_string(scenario_id));
    return static_cast<int>(it - scenario_ids.begin());
}

GroupedView group_view(DataView view) {
    if (view.empty()) throw ParameterError("group_view: empty view");
    std::sort(view.begin(), view.end(),
              [](const RecordView& a, const RecordView& b) { return a.record_id < b.record_id; });
    GroupedView g;
    g.items = std::move(view);
    for (const auto& r : g.items) {
        if (r.group != 0 && r.group != 1) throw ParameterError("group_view: group not in {0,1}");
        if (r.raw == nullptr) throw ParameterError("group_view: null raw pointer");
        g.scenario_ids.push_back(r.scenario_id);
    }
    std::sort(g.scenario_ids.begin(), g.scenario_ids.end());
    g.scenario_ids.erase(std::unique(g.scenario_ids.begin(), g.scenario_ids.end()),
                         g.scenario_ids.end());
    g.blocks.assign(g.scenario_ids.size(), {});
    g.loc.resize(g.items.size());
    for (std::size_t i = 0; i < g.items.size(); ++i) {
        const int s = g.scenario_index_of(g.items[i].scenario_id);
        const int grp = g.items[i].group;
        auto& block = g.blocks[s][grp];
        g.loc[i] = {s, grp, static_cast<int>(block.size())};
        block.push_back(static_cast<int>(i));
    }
    return g;
}

}  // namespace msreid
