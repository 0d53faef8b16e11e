#pragma once

#include "sdmd/csv.hpp"
#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/koopman.hpp"
#include "sdmd/observables.hpp"
#include "sdmd/structured.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sdmd {

inline constexpr const char* kVersion = "0.1.0";

namespace io {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw io_error("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw io_error("failed writing '" + path.string() + "'");
}

inline nlohmann::json read_json(const fs::path& path)
{
    const std::string text = read_text(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("invalid JSON in '" + path.string() + "': " + e.what());
    }
}

/// Pretty-printed with sorted keys and a trailing newline, so equal documents are byte-identical.
inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline SnapshotEnsemble load_ensemble(const fs::path& table, const fs::path& manifest)
{
    if (!fs::exists(manifest)) throw config_error("manifest not found: " + manifest.string());
    if (!fs::exists(table)) throw config_error("expression table not found: " + table.string());
    const auto man = manifest_from_json(read_json(manifest));
    std::ifstream in(table, std::ios::binary);
    if (!in) throw io_error("cannot open '" + table.string() + "'");
    return load_expression_table(in, man, table.string());
}

inline void write_matrix_csv(const fs::path& path, const Labels& rows, const Labels& cols, const Matrix& m)
{
    std::ostringstream os;
    csv::write_matrix(os, rows, cols, m);
    write_text(path, os.str());
}

inline csv::LabeledMatrix read_matrix_csv(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path.string() + "'");
    return csv::read_matrix(in, path.string());
}

// ---------------------------------------------------------------------------
// Koopman model files

inline nlohmann::json fit_meta_json(const KoopmanModel& model, const std::string& config_hash)
{
    const auto& fm = model.fit_meta;
    nlohmann::json j = {{"lambda", fm.lambda},
                        {"residual_fro", fm.residual_fro},
                        {"column_count", fm.column_count},
                        {"rank", fm.rank},
                        {"dictionary", to_json(model.dictionary.descriptor())},
                        {"input_variables", model.dictionary.input_labels()},
                        {"augmentation", fm.augmentation ? to_json(*fm.augmentation) : nlohmann::json(nullptr)},
                        {"warning", fm.warning ? nlohmann::json(*fm.warning) : nlohmann::json(nullptr)},
                        {"config_hash", config_hash},
                        {"version", kVersion}};
    return j;
}

/// Writes <dir>/model.csv and <dir>/fit_meta.json.
inline void write_koopman_model(const fs::path& dir, const KoopmanModel& model, const std::string& config_hash,
                                const nlohmann::json& extra_meta = nlohmann::json::object())
{
    write_matrix_csv(dir / "model.csv", model.row_labels, model.col_labels, model.matrix);
    auto meta = fit_meta_json(model, config_hash);
    for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
    write_json(dir / "fit_meta.json", meta);
}

inline KoopmanModel read_koopman_model(const fs::path& dir)
{
    const auto lm = read_matrix_csv(dir / "model.csv");
    const auto meta = read_json(dir / "fit_meta.json");
    KoopmanModel model{lm.values, lm.row_labels, lm.col_labels,
                       make_dictionary(dictionary_from_json(meta.at("dictionary")),
                                       meta.at("input_variables").get<Labels>()),
                       {}};
    model.fit_meta.lambda = meta.at("lambda").get<double>();
    model.fit_meta.residual_fro = meta.at("residual_fro").get<double>();
    model.fit_meta.column_count = meta.at("column_count").get<Eigen::Index>();
    model.fit_meta.rank = meta.at("rank").get<Eigen::Index>();
    if (!meta.at("augmentation").is_null()) model.fit_meta.augmentation = augmentation_from_json(meta["augmentation"]);
    if (!meta.at("warning").is_null()) model.fit_meta.warning = meta["warning"].get<std::string>();
    return model;
}

// ---------------------------------------------------------------------------
// Hierarchy files

/// A group as declared in a hierarchy file; `rest` takes every label not claimed by another group.
struct GroupDecl {
    std::string id;
    Labels members;
    bool rest = false;
};

struct HierarchyFile {
    std::vector<GroupDecl> groups;
    std::vector<StageSpec> stages;
};

inline StageSpec stage_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw config_error("stage entries must be objects");
    StageSpec s;
    try {
        s.stage_id = j.at("stage_id").get<std::string>();
        s.condition = j.at("condition").get<std::string>();
        s.target_group = j.at("target_group").get<std::string>();
        if (j.contains("known"))
            for (const auto& k : j["known"]) s.known.push_back({k.at("stage").get<std::string>(), k.at("group").get<std::string>()});
        s.learn = j.at("learn").get<std::vector<std::string>>();
        if (j.contains("lambda") && !j["lambda"].is_null()) {
            s.lambda = j["lambda"].get<double>();
            if (!(*s.lambda >= 0.0)) throw config_error("stage '" + s.stage_id + "': lambda must be >= 0");
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed stage entry: ") + e.what());
    }
    return s;
}

inline nlohmann::json to_json(const StageSpec& s)
{
    nlohmann::json known = nlohmann::json::array();
    for (const auto& k : s.known) known.push_back({{"stage", k.stage}, {"group", k.group}});
    return {{"stage_id", s.stage_id},
            {"condition", s.condition},
            {"target_group", s.target_group},
            {"known", known},
            {"learn", s.learn},
            {"lambda", s.lambda ? nlohmann::json(*s.lambda) : nlohmann::json(nullptr)}};
}

inline HierarchyFile hierarchy_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("stages") || !j["stages"].is_array())
        throw config_error("hierarchy file needs a \"stages\" array");
    HierarchyFile h;
    if (j.contains("groups")) {
        for (const auto& g : j["groups"]) {
            GroupDecl d;
            try {
                d.id = g.at("id").get<std::string>();
                d.rest = g.value("rest", false);
                if (g.contains("members")) d.members = g["members"].get<Labels>();
            } catch (const nlohmann::json::exception& e) {
                throw config_error(std::string("malformed group entry: ") + e.what());
            }
            if (d.rest && !d.members.empty()) throw config_error("group '" + d.id + "' has both members and rest");
            h.groups.push_back(std::move(d));
        }
    }
    for (const auto& s : j["stages"]) h.stages.push_back(stage_from_json(s));
    return h;
}

inline nlohmann::json to_json(const HierarchyFile& h)
{
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : h.groups) {
        nlohmann::json e = {{"id", g.id}};
        if (g.rest) e["rest"] = true;
        else e["members"] = g.members;
        groups.push_back(e);
    }
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : h.stages) stages.push_back(to_json(s));
    return {{"groups", groups}, {"stages", stages}};
}

/// Expands group declarations over the full observable label list.
inline Partition resolve_partition(const std::vector<GroupDecl>& decls, const Labels& all_labels)
{
    if (decls.empty()) throw config_error("hierarchy declares no groups");
    std::set<std::string> claimed;
    int rest_count = 0;
    for (const auto& d : decls) {
        if (d.rest) ++rest_count;
        claimed.insert(d.members.begin(), d.members.end());
    }
    if (rest_count > 1) throw config_error("at most one group may use \"rest\"");
    std::vector<Group> groups;
    for (const auto& d : decls) {
        if (!d.rest) {
            groups.push_back({d.id, d.members});
            continue;
        }
        Labels rest;
        for (const auto& l : all_labels)
            if (!claimed.count(l)) rest.push_back(l);
        groups.push_back({d.id, rest});
    }
    return Partition(std::move(groups));
}

// ---------------------------------------------------------------------------
// Structured model archives: <dir>/blocks/<stage>.csv + <dir>/provenance.json

inline nlohmann::json provenance_json(const StructuredModel& model, const std::string& config_hash)
{
    nlohmann::json partition = nlohmann::json::array();
    for (const auto& g : model.partition.groups()) partition.push_back({{"id", g.id}, {"members", g.members}});
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : model.stages) {
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& [g, start, width] : st.spans) spans.push_back({{"group", g}, {"start", start}, {"width", width}});
        stages.push_back({{"spec", to_json(st.spec)},
                          {"block_file", "blocks/" + st.spec.stage_id + ".csv"},
                          {"rows", st.block.rows()},
                          {"cols", st.block.cols()},
                          {"spans", spans},
                          {"lambda", st.lambda},
                          {"residual_fro", st.residual_fro},
                          {"column_count", st.column_count},
                          {"rank", st.rank},
                          {"warning", st.warning ? nlohmann::json(*st.warning) : nlohmann::json(nullptr)},
                          {"consumed", st.consumed}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : model.edges()) edges.push_back({a, b});
    return {{"tool", "sdmd"},
            {"version", kVersion},
            {"config_hash", config_hash},
            {"partition", partition},
            {"stages", stages},
            {"edges", edges}};
}

inline void write_structured_archive(const fs::path& dir, const StructuredModel& model, const std::string& config_hash)
{
    for (const auto& st : model.stages)
        write_matrix_csv(dir / "blocks" / (st.spec.stage_id + ".csv"), st.row_labels, st.col_labels, st.block);
    write_json(dir / "provenance.json", provenance_json(model, config_hash));
}

struct StructuredArchive {
    StructuredModel model;
    std::string config_hash;
};

inline StructuredArchive read_structured_archive(const fs::path& dir)
{
    if (!fs::exists(dir / "provenance.json"))
        throw config_error("not a structured model archive (missing provenance.json): " + dir.string());
    const auto j = read_json(dir / "provenance.json");
    StructuredArchive ar;
    try {
        ar.config_hash = j.at("config_hash").get<std::string>();
        std::vector<Group> groups;
        for (const auto& g : j.at("partition")) groups.push_back({g.at("id").get<std::string>(), g.at("members").get<Labels>()});
        ar.model.partition = Partition(std::move(groups));
        for (const auto& s : j.at("stages")) {
            LearnedStage st;
            st.spec = stage_from_json(s.at("spec"));
            const auto lm = read_matrix_csv(dir / s.at("block_file").get<std::string>());
            st.row_labels = lm.row_labels;
            st.col_labels = lm.col_labels;
            st.block = lm.values;
            for (const auto& sp : s.at("spans"))
                st.spans.emplace_back(sp.at("group").get<std::string>(), sp.at("start").get<Eigen::Index>(),
                                      sp.at("width").get<Eigen::Index>());
            st.lambda = s.at("lambda").get<double>();
            st.residual_fro = s.at("residual_fro").get<double>();
            st.column_count = s.at("column_count").get<Eigen::Index>();
            st.rank = s.at("rank").get<Eigen::Index>();
            if (!s.at("warning").is_null()) st.warning = s["warning"].get<std::string>();
            st.consumed = s.at("consumed").get<std::vector<std::string>>();
            ar.model.stages.push_back(std::move(st));
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed provenance.json in '" + dir.string() + "': " + e.what());
    }
    return ar;
}

} // namespace io
} // namespace sdmd
