#pragma once

#include <string>
#include <vector>

#include "igc/errors.hpp"

// Declarative description of a full network (Table-3 style): block type per
// stage, blocks-per-stage B, widths, identity-mapping flag. Three-stage CIFAR
// nets have depth 3B+2 counting the stem conv, one per block, and the FC head.

namespace igc {

enum class NetBlockType { igc, regconv, sumfusion, gpc };
enum class WidenRule { double_m, double_l };

std::string to_string(NetBlockType t);
std::string to_string(WidenRule r);
NetBlockType block_type_from_string(const std::string& s);
WidenRule widen_rule_from_string(const std::string& s);

struct StageSpec {
    int blocks = 0;
    int l = 0;        // partitions (igc/gpc) or branch count (sumfusion)
    int m = 0;        // channels per partition (igc/gpc)
    int width = 0;    // channel count; derived as l*m for igc/gpc
    int map_size = 0; // documentation of the Table-3 output size; 0 = derive
};

struct ArchSpec {
    NetBlockType block_type = NetBlockType::igc;
    std::vector<StageSpec> stages;
    WidenRule widen_rule = WidenRule::double_m;
    bool identity_mappings = false;
    int n_classes = 10;
};

// Throws ConfigError naming the offending stage index.
void validate_arch(const ArchSpec& arch);

int stage_width(const ArchSpec& arch, int stage);
int arch_depth(const ArchSpec& arch); // stem + blocks + fc

std::string arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const std::string& text);
ArchSpec load_arch_file(const std::string& path);

// FNV-1a over the canonical JSON dump; checkpoint compatibility check.
uint64_t arch_hash(const ArchSpec& arch);

// ---------------------------------------------------------------------------
// Layer plan: the single source of truth that both build_network and
// network_budget consume, so counted parameters cannot drift.
// ---------------------------------------------------------------------------

struct BlockPlan {
    NetBlockType type;
    int stage = 0;
    int index_in_stage = 0;
    int c_in = 0, c_out = 0;
    int l = 0, m_in = 0, m_out = 0; // igc/gpc only
    int stride = 1;
    int map_in = 0, map_out = 0;
    bool starts_unit = false; // first block of a residual pair
    bool ends_unit = false;
    bool projection = false;  // unit shortcut needs a 1x1 conv
};

struct NetPlan {
    int input_hw = 0;
    int input_channels = 3;
    int n_classes = 0;
    int stem_width = 0;
    std::vector<BlockPlan> blocks;
    int final_width = 0;
    int final_map = 0;
    bool identity = false;
};

NetPlan plan_network(const ArchSpec& arch, int input_hw, int n_classes, int input_channels = 3);

} // namespace igc
