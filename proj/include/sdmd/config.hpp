#pragma once

#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/impact.hpp"
#include "sdmd/io.hpp"
#include "sdmd/observables.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sdmd {

/**
 * Everything that drives one CLI run. Relative paths are resolved against the
 * directory holding the config file.
 */
struct RunConfig {
    std::filesystem::path base_dir;

    std::optional<std::string> table;
    std::optional<std::string> manifest;
    std::optional<std::string> hierarchy;
    std::optional<std::string> condition;
    std::optional<std::string> ground_truth;
    std::optional<std::string> archive;
    std::optional<Labels> variables;
    std::string preprocess = "none";

    std::optional<double> lambda;
    DictionaryDescriptor dictionary;
    std::optional<AugmentationConfig> augmentation;

    ThresholdRule rule;
    std::vector<std::string> impact_blocks;
    bool heatmaps = true;
    std::optional<double> heatmap_bound;

    std::string out = "out";
    std::string log_level = "info";

    nlohmann::json simulate = nullptr;
    nlohmann::json synth = nullptr;

    std::filesystem::path resolve(const std::string& p) const
    {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    std::filesystem::path out_dir() const { return resolve(out); }

    static RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {})
    {
        static const std::set<std::string> known = {"table", "manifest", "hierarchy", "condition", "ground_truth",
                                                    "archive", "variables", "preprocess", "lambda", "dictionary",
                                                    "augmentation", "impact", "out", "log_level", "simulate", "synth"};
        if (!j.is_object()) throw config_error("config must be a JSON object");
        for (const auto& [k, v] : j.items())
            if (!known.count(k)) throw config_error("unknown config key '" + k + "'");

        RunConfig c;
        c.base_dir = std::move(base_dir);
        try {
            auto opt_str = [&](const char* key, std::optional<std::string>& dst) {
                if (j.contains(key) && !j[key].is_null()) dst = j[key].get<std::string>();
            };
            opt_str("table", c.table);
            opt_str("manifest", c.manifest);
            opt_str("hierarchy", c.hierarchy);
            opt_str("condition", c.condition);
            opt_str("ground_truth", c.ground_truth);
            opt_str("archive", c.archive);
            if (j.contains("variables") && !j["variables"].is_null()) c.variables = j["variables"].get<Labels>();
            c.preprocess = j.value("preprocess", std::string("none"));
            if (c.preprocess != "none" && c.preprocess != "log2p1")
                throw config_error("preprocess must be \"none\" or \"log2p1\"");
            if (j.contains("lambda") && !j["lambda"].is_null()) {
                if (!j["lambda"].is_number()) throw config_error("lambda must be a number");
                c.lambda = j["lambda"].get<double>();
                if (!(*c.lambda >= 0.0)) throw config_error("lambda must be >= 0");
            }
            if (j.contains("dictionary")) c.dictionary = dictionary_from_json(j["dictionary"]);
            if (c.dictionary.kind == DictionaryKind::polynomial && c.dictionary.degree < 2)
                throw config_error("polynomial dictionary degree must be >= 2");
            if (j.contains("augmentation") && !j["augmentation"].is_null())
                c.augmentation = augmentation_from_json(j["augmentation"]);
            if (j.contains("impact")) {
                const auto& im = j["impact"];
                if (!im.is_object()) throw config_error("impact must be an object");
                if (im.contains("rule")) c.rule = threshold_rule_from_json(im["rule"]);
                if (im.contains("blocks")) c.impact_blocks = im["blocks"].get<std::vector<std::string>>();
                c.heatmaps = im.value("heatmaps", true);
                if (im.contains("heatmap_bound") && !im["heatmap_bound"].is_null())
                    c.heatmap_bound = im["heatmap_bound"].get<double>();
            }
            c.out = j.value("out", std::string("out"));
            c.log_level = j.value("log_level", std::string("info"));
            if (j.contains("simulate")) c.simulate = j["simulate"];
            if (j.contains("synth")) c.synth = j["synth"];
        } catch (const nlohmann::json::exception& e) {
            throw config_error(std::string("malformed config: ") + e.what());
        }
        return c;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        auto put = [&](const char* key, const std::optional<std::string>& v) {
            if (v) j[key] = *v;
        };
        put("table", table);
        put("manifest", manifest);
        put("hierarchy", hierarchy);
        put("condition", condition);
        put("ground_truth", ground_truth);
        put("archive", archive);
        if (variables) j["variables"] = *variables;
        j["preprocess"] = preprocess;
        if (lambda) j["lambda"] = *lambda;
        j["dictionary"] = sdmd::to_json(dictionary);
        if (augmentation) j["augmentation"] = sdmd::to_json(*augmentation);
        nlohmann::json im = {{"rule", sdmd::to_json(rule)}, {"heatmaps", heatmaps}};
        if (!impact_blocks.empty()) im["blocks"] = impact_blocks;
        if (heatmap_bound) im["heatmap_bound"] = *heatmap_bound;
        j["impact"] = im;
        j["out"] = out;
        j["log_level"] = log_level;
        if (!simulate.is_null()) j["simulate"] = simulate;
        if (!synth.is_null()) j["synth"] = synth;
        return j;
    }

    /// Hash of the settings that determine fitted artifacts (output location, logging and impact settings excluded).
    std::string hash() const
    {
        auto j = to_json();
        j.erase("out");
        j.erase("log_level");
        j.erase("impact");
        j.erase("archive");
        return io::fnv1a_hex(j.dump());
    }

    static RunConfig load(const std::filesystem::path& path)
    {
        if (!std::filesystem::exists(path)) throw config_error("config file not found: " + path.string());
        return from_json(io::read_json(path), path.parent_path());
    }
};

} // namespace sdmd
