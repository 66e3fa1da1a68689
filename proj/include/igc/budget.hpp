#pragma once

#include <optional>
#include <string>
#include <vector>

#include "igc/arch.hpp"

// Parameter/width accounting for single blocks and whole networks.
//
// Conventions (used consistently everywhere, including the CLI tables):
//  - one FLOP = one multiply-add
//  - block parameters count convolution kernels only (conv layers are
//    bias-free); network parameters additionally count BN affine pairs and
//    the FC weights+bias
//  - network FLOPs count conv and FC multiply-adds; BN, ReLU and pooling are
//    not counted

namespace igc {

long long igc_param_count(long long l, long long m, long long s);
long long gpc_param_count(long long l, long long m, long long s);
long long regular_param_count(long long c, long long s);

// Largest integer C with C*C*S <= t.
int regular_width_for_budget(long long t, int s);

// Spatial-swapped block (1x1 primary, k x k secondary, partition structure
// transposed); equals igc_param_count(m, l, s).
long long igc_param_count_spatial_swapped(long long l, long long m, long long s);

// G > C iff L/(L-1) < M*S; the L=1 extreme is defined false.
bool is_wider(int l, int m, int s);

// G <= (T / (2*sqrt(S)))^(2/3), tight when L = M*S.
double width_upper_bound(double t_params, int s);

enum class BudgetBlock { igc, gpc };

struct BudgetEntry {
    int l = 0;
    int m = 0;
    long long params = 0;
    int width = 0;
};

struct BudgetReport {
    std::vector<BudgetEntry> entries; // sorted by L ascending
    long long target = 0;
    int s = 0;
    double tol_fraction = 0;
    BudgetBlock block = BudgetBlock::igc;
};

// For each L, the width-maximizing M with |params - target| <= tol*target.
BudgetReport enumerate_configs(long long target, int s, double tol_fraction, BudgetBlock block);

// argmax of L*M over the enumeration; ties broken toward smaller L.
std::optional<BudgetEntry> widest_config(long long target, int s, double tol_fraction,
                                         BudgetBlock block);

// Exhaustive argmax over all (L, M) with params <= cap (ties toward smaller L).
BudgetEntry widest_under_cap(long long cap, int s, BudgetBlock block);

struct StageBudget {
    std::string name;
    long long params = 0;
    long long flops = 0;
};

struct NetworkBudget {
    long long total_params = 0;
    long long flops = 0;
    std::vector<StageBudget> per_stage;
};

NetworkBudget network_budget(const ArchSpec& arch, int input_hw, int n_classes);

std::string budget_report_csv(const BudgetReport& report);

} // namespace igc
