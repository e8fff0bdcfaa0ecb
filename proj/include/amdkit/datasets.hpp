#pragma once

// Item x feature data model. Features are partitioned into classes; each
// class is one task. Task index "null" is the reserved do-nothing task whose
// targets are all zero.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "hash.hpp"
#include "rng.hpp"

namespace amdkit {

/// A real task index, or nullopt for the null task.
using TaskRef = std::optional<std::size_t>;
inline constexpr TaskRef null_task = std::nullopt;

struct Dataset {
    std::vector<std::string> item_names;
    std::vector<std::string> feature_names;
    std::vector<std::string> task_names;
    std::vector<std::size_t> class_of_feature;
    std::vector<std::uint8_t> targets;  // row-major, items x features

    std::size_t n_items() const { return item_names.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    std::size_t n_tasks() const { return task_names.size(); }

    std::uint8_t target(std::size_t item, std::size_t feature) const {
        return targets[item * n_features() + feature];
    }

    bool operator==(const Dataset&) const = default;

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;

    nlohmann::json to_json() const;

    /// Hash of the canonical JSON encoding. Checkpoints record it so analyses
    /// can refuse mismatched data.
    std::uint64_t fingerprint() const { return fnv1a64(to_json().dump()); }
};

struct SyntheticConfig {
    std::size_t n_items = 40;
    std::size_t n_classes = 8;
    std::size_t features_per_class = 25;
    /// When non-zero, overrides n_classes * features_per_class; features are
    /// spread over classes as evenly as possible (earlier classes get extras).
    std::size_t total_features = 0;
    double positive_rate = 0.6;
    double class_expression_rate = 0.85;
    std::uint64_t seed = 7;

    void validate() const {
        auto rate_ok = [](double r) { return r > 0.0 && r < 1.0; };
        if (n_items < 2) throw ValidationError("n_items must be >= 2");
        if (n_classes < 2) throw ValidationError("n_classes must be >= 2");
        if (features_per_class < 1) throw ValidationError("features_per_class must be >= 1");
        if (total_features != 0 && total_features < n_classes)
            throw ValidationError("total_features must be >= n_classes");
        if (!rate_ok(positive_rate)) throw ValidationError("positive_rate must lie in (0,1)");
        if (!rate_ok(class_expression_rate))
            throw ValidationError("class_expression_rate must lie in (0,1)");
    }

    /// 40 items, 8 classes of 25 features. Dense enough per class that the
    /// beta-smoothed sensitivity floor of a fully ablated task stays below 0.05.
    static SyntheticConfig desk(std::uint64_t seed = 7) {
        SyntheticConfig c;
        c.seed = seed;
        return c;
    }

    /// Same shape as the Leuven animal data: 350 items, 36 classes, 2896 features.
    static SyntheticConfig paper_shape(std::uint64_t seed = 7) {
        SyntheticConfig c;
        c.n_items = 350;
        c.n_classes = 36;
        c.total_features = 2896;
        c.positive_rate = 0.3;
        c.class_expression_rate = 0.5;
        c.seed = seed;
        return c;
    }
};

// ---------------------------------------------------------------------------

inline void Dataset::validate() const {
    auto check_unique = [](const std::vector<std::string>& names, const char* what) {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!seen.insert(names[i]).second)
                throw ValidationError(std::string("duplicate ") + what + " name '" + names[i] +
                                      "' at index " + std::to_string(i));
        }
    };
    if (n_items() < 2) throw ValidationError("dataset needs at least 2 items");
    if (n_tasks() < 2) throw ValidationError("dataset needs at least 2 classes");
    if (n_features() == 0) throw ValidationError("dataset has no features");
    check_unique(item_names, "item");
    check_unique(feature_names, "feature");
    check_unique(task_names, "class");
    if (class_of_feature.size() != n_features())
        throw ValidationError("class_of_feature has " + std::to_string(class_of_feature.size()) +
                              " entries, expected " + std::to_string(n_features()));
    std::vector<std::size_t> class_size(n_tasks(), 0);
    for (std::size_t f = 0; f < n_features(); ++f) {
        if (class_of_feature[f] >= n_tasks())
            throw ValidationError("feature '" + feature_names[f] + "' has class index " +
                                  std::to_string(class_of_feature[f]) + " out of range");
        ++class_size[class_of_feature[f]];
    }
    for (std::size_t t = 0; t < n_tasks(); ++t)
        if (class_size[t] == 0) throw ValidationError("class '" + task_names[t] + "' has no features");
    if (targets.size() != n_items() * n_features())
        throw ValidationError("targets matrix has wrong size");
    for (std::size_t i = 0; i < n_items(); ++i)
        for (std::size_t f = 0; f < n_features(); ++f)
            if (target(i, f) > 1)
                throw ValidationError("non-binary target at row " + std::to_string(i) + ", column " +
                                      std::to_string(f));
}

inline nlohmann::json Dataset::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < n_items(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t f = 0; f < n_features(); ++f) row.push_back(static_cast<int>(target(i, f)));
        rows.push_back(std::move(row));
    }
    return {{"items", item_names},
            {"features", feature_names},
            {"classes", task_names},
            {"class_of_feature", class_of_feature},
            {"targets", std::move(rows)}};
}

/// Features of every class, ascending.
inline std::vector<std::vector<std::size_t>> features_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> out(ds.n_tasks());
    for (std::size_t f = 0; f < ds.n_features(); ++f) out[ds.class_of_feature[f]].push_back(f);
    return out;
}

/// Targets for one (item, task) pair: the item's positives restricted to the
/// task's class, or all zeros for the null task.
inline std::vector<std::uint8_t> task_targets(const Dataset& ds, std::size_t item, TaskRef task) {
    if (item >= ds.n_items()) throw ValidationError("item index out of range");
    if (task && *task >= ds.n_tasks()) throw ValidationError("task index out of range");
    std::vector<std::uint8_t> out(ds.n_features(), 0);
    if (!task) return out;
    for (std::size_t f = 0; f < ds.n_features(); ++f)
        out[f] = (ds.class_of_feature[f] == *task) ? ds.target(item, f) : 0;
    return out;
}

/// Union target used by the context-independent head: the item's full row.
inline std::vector<std::uint8_t> union_targets(const Dataset& ds, std::size_t item) {
    if (item >= ds.n_items()) throw ValidationError("item index out of range");
    auto first = ds.targets.begin() + static_cast<std::ptrdiff_t>(item * ds.n_features());
    return {first, first + static_cast<std::ptrdiff_t>(ds.n_features())};
}

inline Dataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const std::size_t n_feat =
        config.total_features ? config.total_features : config.n_classes * config.features_per_class;

    Dataset ds;
    char buf[64];
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        std::snprintf(buf, sizeof buf, "class_%02zu", c);
        ds.task_names.emplace_back(buf);
    }
    const std::size_t base = n_feat / config.n_classes, extra = n_feat % config.n_classes;
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        const std::size_t count = base + (c < extra ? 1 : 0);
        for (std::size_t k = 0; k < count; ++k) {
            std::snprintf(buf, sizeof buf, "c%02zu_f%03zu", c, k);
            ds.feature_names.emplace_back(buf);
            ds.class_of_feature.push_back(c);
        }
    }
    for (std::size_t i = 0; i < config.n_items; ++i) {
        std::snprintf(buf, sizeof buf, "item_%03zu", i);
        ds.item_names.emplace_back(buf);
    }

    Rng rng(config.seed);
    ds.targets.assign(config.n_items * n_feat, 0);
    std::vector<std::uint8_t> row(n_feat);
    for (std::size_t i = 0; i < config.n_items; ++i) {
        bool any = false;
        while (!any) {
            std::vector<bool> expressed(config.n_classes);
            for (std::size_t c = 0; c < config.n_classes; ++c)
                expressed[c] = rng.bernoulli(config.class_expression_rate);
            for (std::size_t f = 0; f < n_feat; ++f) {
                row[f] = expressed[ds.class_of_feature[f]] && rng.bernoulli(config.positive_rate);
                any = any || row[f];
            }
        }
        std::copy(row.begin(), row.end(), ds.targets.begin() + static_cast<std::ptrdiff_t>(i * n_feat));
    }
    return ds;
}

// --- file formats ------------------------------------------------------------

inline Dataset dataset_from_json(const nlohmann::json& j) {
    auto field = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw ValidationError(std::string("dataset JSON missing field '") + key + "'");
        return j.at(key);
    };
    Dataset ds;
    try {
        ds.item_names = field("items").get<std::vector<std::string>>();
        ds.feature_names = field("features").get<std::vector<std::string>>();
        ds.task_names = field("classes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("dataset JSON: ") + e.what());
    }
    const auto& cls = field("class_of_feature");
    if (!cls.is_array()) throw ValidationError("class_of_feature must be an array");
    for (std::size_t f = 0; f < cls.size(); ++f) {
        if (!cls[f].is_number_integer() || cls[f].get<long long>() < 0)
            throw ValidationError("class_of_feature[" + std::to_string(f) + "] is not a class index");
        ds.class_of_feature.push_back(cls[f].get<std::size_t>());
    }

    // A feature name listed twice is a feature assigned to two classes.
    std::map<std::string, std::size_t> first_class;
    for (std::size_t f = 0; f < ds.feature_names.size() && f < ds.class_of_feature.size(); ++f) {
        auto [it, fresh] = first_class.emplace(ds.feature_names[f], ds.class_of_feature[f]);
        if (!fresh && it->second != ds.class_of_feature[f])
            throw ValidationError("feature '" + ds.feature_names[f] + "' is assigned to two classes (" +
                                  std::to_string(it->second) + " and " +
                                  std::to_string(ds.class_of_feature[f]) + ")");
    }

    const auto& rows = field("targets");
    if (!rows.is_array() || rows.size() != ds.item_names.size())
        throw ValidationError("targets must have one row per item");
    ds.targets.reserve(ds.item_names.size() * ds.feature_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || rows[i].size() != ds.feature_names.size())
            throw ValidationError("targets row " + std::to_string(i) + " must have one entry per feature");
        for (std::size_t f = 0; f < rows[i].size(); ++f) {
            const auto& v = rows[i][f];
            if (!v.is_number() || !(v.get<double>() == 0.0 || v.get<double>() == 1.0))
                throw ValidationError("non-binary target value " + v.dump() + " at row " + std::to_string(i) +
                                      ", column " + std::to_string(f));
            ds.targets.push_back(static_cast<std::uint8_t>(v.get<double>()));
        }
    }
    ds.validate();
    return ds;
}

/// Wide CSV: header "item,<feature>|<class>,...", then one row per item.
inline Dataset dataset_from_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("CSV dataset is empty");
    const auto header = split(line);
    if (header.size() < 2) throw ValidationError("CSV header needs at least one feature column");

    Dataset ds;
    std::map<std::string, std::size_t> class_index;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto bar = header[c].rfind('|');
        if (bar == std::string::npos)
            throw ValidationError("CSV header column " + std::to_string(c) + " ('" + header[c] +
                                  "') is not of the form feature|class");
        const std::string cls = header[c].substr(bar + 1);
        auto [it, fresh] = class_index.emplace(cls, ds.task_names.size());
        if (fresh) ds.task_names.push_back(cls);
        ds.feature_names.push_back(header[c].substr(0, bar));
        ds.class_of_feature.push_back(it->second);
    }
    nlohmann::json j;
    j["items"] = nlohmann::json::array();
    j["targets"] = nlohmann::json::array();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw ValidationError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(header.size()));
        j["items"].push_back(cells[0]);
        nlohmann::json values = nlohmann::json::array();
        for (std::size_t c = 1; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing");
                values.push_back(v);
            } catch (const std::exception&) {
                throw ValidationError("CSV value '" + cells[c] + "' at row " + std::to_string(row) +
                                      ", column " + std::to_string(c - 1) + " is not a number");
            }
        }
        j["targets"].push_back(std::move(values));
        ++row;
    }
    j["features"] = ds.feature_names;
    j["classes"] = ds.task_names;
    j["class_of_feature"] = ds.class_of_feature;
    return dataset_from_json(j);
}

/// Loads a dataset from JSON, or from wide CSV when the path ends in ".csv".
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file '" + path + "'");
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return dataset_from_csv(in);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("malformed dataset JSON in '" + path + "': " + e.what());
    }
    return dataset_from_json(j);
}

inline std::string dataset_json_text(const Dataset& ds) { return ds.to_json().dump() + "\n"; }

}  // namespace amdkit
