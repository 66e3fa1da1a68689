#include "igc/arch.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace igc {

std::string to_string(NetBlockType t) {
    switch (t) {
        case NetBlockType::igc: return "igc";
        case NetBlockType::regconv: return "regconv";
        case NetBlockType::sumfusion: return "sumfusion";
        case NetBlockType::gpc: return "gpc";
    }
    return "?";
}

std::string to_string(WidenRule r) {
    return r == WidenRule::double_m ? "double_m" : "double_l";
}

NetBlockType block_type_from_string(const std::string& s) {
    if (s == "igc" || s == "IGC") return NetBlockType::igc;
    if (s == "regconv" || s == "RegConv") return NetBlockType::regconv;
    if (s == "sumfusion" || s == "SumFusion") return NetBlockType::sumfusion;
    if (s == "gpc" || s == "GPC") return NetBlockType::gpc;
    throw ConfigError("unknown block type '" + s + "'");
}

WidenRule widen_rule_from_string(const std::string& s) {
    if (s == "double_m" || s == "double_M") return WidenRule::double_m;
    if (s == "double_l" || s == "double_L") return WidenRule::double_l;
    throw ConfigError("unknown widen rule '" + s + "'");
}

int stage_width(const ArchSpec& arch, int stage) {
    const StageSpec& st = arch.stages.at(stage);
    if (arch.block_type == NetBlockType::igc || arch.block_type == NetBlockType::gpc)
        return st.l * st.m;
    return st.width;
}

int arch_depth(const ArchSpec& arch) {
    int blocks = 0;
    for (const auto& st : arch.stages) blocks += st.blocks;
    return blocks + 2;
}

void validate_arch(const ArchSpec& arch) {
    if (arch.stages.empty()) throw ConfigError("arch has no stages");
    if (arch.n_classes < 2) throw ConfigError("arch needs >= 2 classes");
    const bool grouped =
        arch.block_type == NetBlockType::igc || arch.block_type == NetBlockType::gpc;
    for (size_t i = 0; i < arch.stages.size(); ++i) {
        const StageSpec& st = arch.stages[i];
        const std::string where = "stage " + std::to_string(i);
        if (st.blocks < 0) throw ConfigError(where + ": negative block count");
        if (grouped) {
            if (st.l < 1 || st.m < 1) throw ConfigError(where + ": igc/gpc stage needs l, m >= 1");
            if (st.width != 0 && st.width != st.l * st.m)
                throw ConfigError(where + ": width " + std::to_string(st.width) + " != l*m = " +
                                  std::to_string(st.l * st.m));
        } else if (arch.block_type == NetBlockType::sumfusion) {
            if (st.l < 1 || st.width < 1)
                throw ConfigError(where + ": sumfusion stage needs branch count l and width");
        } else {
            if (st.width < 1) throw ConfigError(where + ": regconv stage needs width");
        }
        if (i > 0) {
            const int prev = stage_width(arch, static_cast<int>(i) - 1);
            const int cur = stage_width(arch, static_cast<int>(i));
            if (cur != 2 * prev)
                throw ConfigError(where + ": width " + std::to_string(cur) +
                                  " does not double the previous stage's " + std::to_string(prev));
            if (grouped) {
                const StageSpec& ps = arch.stages[i - 1];
                if (arch.widen_rule == WidenRule::double_m && (st.l != ps.l || st.m != 2 * ps.m))
                    throw ConfigError(where + ": double_m expects l fixed, m doubled");
                if (arch.widen_rule == WidenRule::double_l && (st.m != ps.m || st.l != 2 * ps.l))
                    throw ConfigError(where + ": double_l expects m fixed, l doubled");
            }
        }
    }
}

std::string arch_to_json(const ArchSpec& arch) {
    nlohmann::ordered_json j;
    j["block_type"] = to_string(arch.block_type);
    j["widen_rule"] = to_string(arch.widen_rule);
    j["identity_mappings"] = arch.identity_mappings;
    j["n_classes"] = arch.n_classes;
    j["stages"] = nlohmann::ordered_json::array();
    for (const auto& st : arch.stages) {
        nlohmann::ordered_json s;
        s["blocks"] = st.blocks;
        if (st.l) s["l"] = st.l;
        if (st.m) s["m"] = st.m;
        if (st.width) s["width"] = st.width;
        if (st.map_size) s["map_size"] = st.map_size;
        j["stages"].push_back(s);
    }
    return j.dump(2);
}

ArchSpec arch_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("arch json: ") + e.what());
    }
    ArchSpec arch;
    try {
        arch.block_type = block_type_from_string(j.at("block_type").get<std::string>());
        if (j.contains("widen_rule"))
            arch.widen_rule = widen_rule_from_string(j.at("widen_rule").get<std::string>());
        arch.identity_mappings = j.value("identity_mappings", false);
        arch.n_classes = j.value("n_classes", 10);
        for (const auto& s : j.at("stages")) {
            StageSpec st;
            st.blocks = s.at("blocks").get<int>();
            st.l = s.value("l", 0);
            st.m = s.value("m", 0);
            st.width = s.value("width", 0);
            st.map_size = s.value("map_size", 0);
            arch.stages.push_back(st);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("arch json: ") + e.what());
    }
    validate_arch(arch);
    return arch;
}

ArchSpec load_arch_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open arch file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return arch_from_json(ss.str());
}

uint64_t arch_hash(const ArchSpec& arch) {
    const std::string text = arch_to_json(arch);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

NetPlan plan_network(const ArchSpec& arch, int input_hw, int n_classes, int input_channels) {
    validate_arch(arch);
    if (input_hw < 1 || n_classes < 2 || input_channels < 1)
        throw ConfigError("bad plan inputs hw=" + std::to_string(input_hw));
    NetPlan plan;
    plan.input_hw = input_hw;
    plan.input_channels = input_channels;
    plan.n_classes = n_classes;
    plan.identity = arch.identity_mappings;
    plan.stem_width = stage_width(arch, 0);

    int map = input_hw; // stem is 3x3 stride 1 same-pad
    int width = plan.stem_width;
    for (size_t si = 0; si < arch.stages.size(); ++si) {
        const StageSpec& st = arch.stages[si];
        const int c_out = stage_width(arch, static_cast<int>(si));
        for (int b = 0; b < st.blocks; ++b) {
            BlockPlan bp;
            bp.type = arch.block_type;
            bp.stage = static_cast<int>(si);
            bp.index_in_stage = b;
            bp.c_in = width;
            bp.c_out = c_out;
            bp.stride = (si > 0 && b == 0) ? 2 : 1;
            bp.map_in = map;
            bp.map_out = (map + 2 * 1 - 3) / bp.stride + 1; // k=3, same pad, floor
            if (arch.block_type == NetBlockType::igc || arch.block_type == NetBlockType::gpc) {
                bp.l = st.l;
                bp.m_out = st.m;
                // transition blocks keep L (double_m) or split old partitions (double_l)
                bp.m_in = bp.c_in / st.l;
                if (bp.c_in % st.l != 0)
                    throw ConfigError("stage " + std::to_string(si) + ": input width " +
                                      std::to_string(bp.c_in) + " not divisible into " +
                                      std::to_string(st.l) + " partitions");
            } else if (arch.block_type == NetBlockType::sumfusion) {
                bp.l = st.l;
            }
            if (arch.identity_mappings && b % 2 == 0 && b + 1 < st.blocks) {
                bp.starts_unit = true;
                bp.projection = (bp.stride != 1 || bp.c_in != bp.c_out);
            }
            if (arch.identity_mappings && b % 2 == 1) bp.ends_unit = true;
            plan.blocks.push_back(bp);
            map = bp.map_out;
            width = c_out;
        }
        // a stage with zero blocks leaves width/map unchanged
    }
    plan.final_width = width;
    plan.final_map = map;
    return plan;
}

} // namespace igc
