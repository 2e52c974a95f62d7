#pragma once

#include <array>
#include <vector>

#include "msreid/synthgen.hpp"

namespace msreid {

// Canonical organization of a truth-free view: records sorted by record_id,
// scenarios indexed by sorted scenario_id, and per-(scenario, group) blocks of
// item indices. All stages and the evaluator agree on this ordering, which is
// what makes runs reproducible.
struct GroupedView {
    struct ItemLoc {
        int scenario_index = 0;
        int group = 0;
        int pos = 0;  // position inside its block
    };

    std::vector<RecordView> items;
    std::vector<int> scenario_ids;                         // sorted unique
    std::vector<std::array<std::vector<int>, 2>> blocks;   // [scenario_index][group] -> item indices
    std::vector<ItemLoc> loc;                              // aligned with items

    int scenario_index_of(int scenario_id) const;
};

GroupedView group_view(DataView view);

}  // namespace msreid
