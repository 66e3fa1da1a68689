#include "igc/budget.hpp"

#include <cmath>
#include <sstream>

namespace igc {

long long igc_param_count(long long l, long long m, long long s) {
    return l * m * m * s + m * l * l;
}

long long gpc_param_count(long long l, long long m, long long s) {
    return l * m * m * s + (l * m) * (l * m);
}

long long regular_param_count(long long c, long long s) { return c * c * s; }

int regular_width_for_budget(long long t, int s) {
    int c = static_cast<int>(std::floor(std::sqrt(static_cast<double>(t) / s)));
    while (regular_param_count(c + 1, s) <= t) ++c;
    while (c > 0 && regular_param_count(c, s) > t) --c;
    return c;
}

long long igc_param_count_spatial_swapped(long long l, long long m, long long s) {
    return l * m * m + m * l * l * s;
}

bool is_wider(int l, int m, int s) {
    if (l <= 1) return false;
    return static_cast<double>(l) / (l - 1) < static_cast<double>(m) * s;
}

double width_upper_bound(double t_params, int s) {
    return std::pow(t_params / (2.0 * std::sqrt(static_cast<double>(s))), 2.0 / 3.0);
}

namespace {

long long block_count(BudgetBlock block, long long l, long long m, int s) {
    return block == BudgetBlock::igc ? igc_param_count(l, m, s) : gpc_param_count(l, m, s);
}

} // namespace

BudgetReport enumerate_configs(long long target, int s, double tol_fraction, BudgetBlock block) {
    if (target <= 0) throw InputError("target must be positive");
    if (s < 1) throw InputError("S must be >= 1");
    BudgetReport report;
    report.target = target;
    report.s = s;
    report.tol_fraction = tol_fraction;
    report.block = block;
    const double lo = target * (1.0 - tol_fraction);
    const double hi = target * (1.0 + tol_fraction);
    for (long long l = 1; l <= target; ++l) {
        if (static_cast<double>(block_count(block, l, 1, s)) > hi) break;
        // params grow monotonically in M; take the largest M under the band
        long long m = 1;
        while (static_cast<double>(block_count(block, l, m + 1, s)) <= hi) ++m;
        const long long params = block_count(block, l, m, s);
        if (static_cast<double>(params) < lo) continue;
        report.entries.push_back(BudgetEntry{static_cast<int>(l), static_cast<int>(m), params,
                                             static_cast<int>(l * m)});
    }
    return report;
}

std::optional<BudgetEntry> widest_config(long long target, int s, double tol_fraction,
                                         BudgetBlock block) {
    const BudgetReport report = enumerate_configs(target, s, tol_fraction, block);
    std::optional<BudgetEntry> best;
    for (const auto& e : report.entries)
        if (!best || e.width > best->width) best = e;
    return best;
}

BudgetEntry widest_under_cap(long long cap, int s, BudgetBlock block) {
    BudgetEntry best;
    for (long long l = 1; block_count(block, l, 1, s) <= cap; ++l)
        for (long long m = 1; block_count(block, l, m, s) <= cap; ++m) {
            const int width = static_cast<int>(l * m);
            if (width > best.width) {
                best = BudgetEntry{static_cast<int>(l), static_cast<int>(m),
                                   block_count(block, l, m, s), width};
            }
        }
    return best;
}

namespace {

struct Tally {
    long long params = 0;
    long long flops = 0;
};

Tally tally_block(const BlockPlan& b) {
    Tally t;
    const long long map2 = static_cast<long long>(b.map_out) * b.map_out;
    switch (b.type) {
        case NetBlockType::igc: {
            const long long primary = static_cast<long long>(b.l) * b.m_out * b.m_in * 9;
            const long long secondary = static_cast<long long>(b.m_out) * b.l * b.l;
            t.params = primary + secondary;
            t.flops = (primary + secondary) * map2;
            break;
        }
        case NetBlockType::gpc: {
            const long long primary = static_cast<long long>(b.l) * b.m_out * b.m_in * 9;
            const long long point = static_cast<long long>(b.l) * b.m_out * b.l * b.m_out;
            t.params = primary + point;
            t.flops = (primary + point) * map2;
            break;
        }
        case NetBlockType::regconv: {
            const long long conv = static_cast<long long>(b.c_in) * b.c_out * 9;
            t.params = conv;
            t.flops = conv * map2;
            break;
        }
        case NetBlockType::sumfusion: {
            const long long conv = static_cast<long long>(b.l) * b.c_in * b.c_out * 9;
            t.params = conv;
            t.flops = conv * map2;
            break;
        }
    }
    t.params += 2LL * b.c_out; // BN affine
    if (b.projection) {
        const long long proj = static_cast<long long>(b.c_in) * b.c_out;
        t.params += proj + 2LL * b.c_out;
        t.flops += proj * map2;
    }
    return t;
}

} // namespace

NetworkBudget network_budget(const ArchSpec& arch, int input_hw, int n_classes) {
    const NetPlan plan = plan_network(arch, input_hw, n_classes);
    NetworkBudget budget;

    StageBudget stem;
    stem.name = "stem";
    stem.params = static_cast<long long>(plan.input_channels) * plan.stem_width * 9 +
                  2LL * plan.stem_width;
    stem.flops = static_cast<long long>(plan.input_channels) * plan.stem_width * 9 * input_hw *
                 input_hw;
    budget.per_stage.push_back(stem);

    int cur_stage = -1;
    for (const auto& b : plan.blocks) {
        if (b.stage != cur_stage) {
            cur_stage = b.stage;
            budget.per_stage.push_back(StageBudget{"stage" + std::to_string(cur_stage), 0, 0});
        }
        const Tally t = tally_block(b);
        budget.per_stage.back().params += t.params;
        budget.per_stage.back().flops += t.flops;
    }

    StageBudget head;
    head.name = "head";
    head.params = static_cast<long long>(plan.final_width) * n_classes + n_classes;
    head.flops = static_cast<long long>(plan.final_width) * n_classes;
    budget.per_stage.push_back(head);

    for (const auto& st : budget.per_stage) {
        budget.total_params += st.params;
        budget.flops += st.flops;
    }
    return budget;
}

std::string budget_report_csv(const BudgetReport& report) {
    std::ostringstream out;
    out << "L,M,params,width\n";
    for (const auto& e : report.entries)
        out << e.l << "," << e.m << "," << e.params << "," << e.width << "\n";
    return out.str();
}

} // namespace igc
