#pragma once

// Domain entities shared by every other module: anatomical structures,
// the phenotype catalog, non-imaging factors, the immutable cohort table
// and phenotype-factor associations.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phewas/errors.hpp"
#include "phewas/prng.hpp"

namespace phewas {

using Json = nlohmann::ordered_json;

enum class Structure : int { LV = 0, RV, LA, RA, AAo, DAo };
inline constexpr int kNumStructures = 6;
inline constexpr const char* kStructureNames[kNumStructures] = {
    "LV", "RV", "LA", "RA", "AAo", "DAo"};

inline std::string to_string(Structure s) {
  return kStructureNames[static_cast<int>(s)];
}
inline Structure structure_from_string(const std::string& s) {
  for (int i = 0; i < kNumStructures; ++i)
    if (s == kStructureNames[i]) return static_cast<Structure>(i);
  throw SchemaError("unknown anatomical structure: " + s);
}

enum class Function : int {
  Volume = 0,
  EjectionFraction,
  Mass,
  StrokeVolume,
  CardiacOutput,
  Area,
  Distensibility,
  WallThickness,
  Strain
};
inline constexpr int kNumFunctions = 9;
inline constexpr const char* kFunctionNames[kNumFunctions] = {
    "Volume",        "EjectionFraction", "Mass",
    "StrokeVolume",  "CardiacOutput",    "Area",
    "Distensibility", "WallThickness",   "Strain"};

inline std::string to_string(Function f) {
  return kFunctionNames[static_cast<int>(f)];
}
inline Function function_from_string(const std::string& s) {
  for (int i = 0; i < kNumFunctions; ++i)
    if (s == kFunctionNames[i]) return static_cast<Function>(i);
  throw SchemaError("unknown function category: " + s);
}

struct Phenotype {
  std::string id;
  std::string name;
  Structure structure;
  Function function;
  std::string units;
};

// Ordered universe of valid phenotypes. The (structure, function) grid it
// declares is the reference set for the coverage metric.
class PhenotypeCatalog {
 public:
  explicit PhenotypeCatalog(std::vector<Phenotype> entries)
      : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].id, i).second)
        throw SchemaError("duplicate phenotype id in catalog: " +
                          entries_[i].id);
      grid_.emplace(entries_[i].structure, entries_[i].function);
    }
  }

  const std::vector<Phenotype>& entries() const { return entries_; }

  const Phenotype* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::vector<Phenotype> for_structure(Structure s) const {
    std::vector<Phenotype> out;
    for (const auto& p : entries_)
      if (p.structure == s) out.push_back(p);
    return out;
  }

  const std::set<std::pair<Structure, Function>>& grid() const {
    return grid_;
  }

  std::set<Structure> structures() const {
    std::set<Structure> out;
    for (const auto& [s, f] : grid_) out.insert(s);
    return out;
  }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& p : entries_) {
      arr.push_back({{"id", p.id},
                     {"name", p.name},
                     {"structure", to_string(p.structure)},
                     {"function", to_string(p.function)},
                     {"units", p.units}});
    }
    return arr;
  }

  static PhenotypeCatalog from_json(const Json& arr) {
    if (!arr.is_array()) throw SchemaError("catalog JSON must be an array");
    std::vector<Phenotype> entries;
    for (const auto& e : arr) {
      entries.push_back({e.at("id").get<std::string>(),
                         e.at("name").get<std::string>(),
                         structure_from_string(e.at("structure")),
                         function_from_string(e.at("function")),
                         e.at("units").get<std::string>()});
    }
    return PhenotypeCatalog(std::move(entries));
  }

 private:
  std::vector<Phenotype> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::pair<Structure, Function>> grid_;
};

// Default catalog covering the six structures. Regional wall thickness and
// strain measures are assigned to LV (flagged regional in the name only).
inline PhenotypeCatalog build_default_catalog() {
  auto P = [](std::string id, std::string name, Structure s, Function f,
              std::string units) {
    return Phenotype{std::move(id), std::move(name), s, f, std::move(units)};
  };
  std::vector<Phenotype> e = {
      P("LVEDV", "LVEDV (mL)", Structure::LV, Function::Volume, "mL"),
      P("LVESV", "LVESV (mL)", Structure::LV, Function::Volume, "mL"),
      P("LVSV", "LVSV (mL)", Structure::LV, Function::StrokeVolume, "mL"),
      P("LVEF", "LVEF (%)", Structure::LV, Function::EjectionFraction, "%"),
      P("LVM", "LVM (g)", Structure::LV, Function::Mass, "g"),
      P("LVCO", "LVCO (L/min)", Structure::LV, Function::CardiacOutput,
        "L/min"),
      P("WT_AHA_2", "WT_AHA_2 (mm)", Structure::LV, Function::WallThickness,
        "mm"),
      P("Ell_4", "Ell_4 (%)", Structure::LV, Function::Strain, "%"),
      P("RVEDV", "RVEDV (mL)", Structure::RV, Function::Volume, "mL"),
      P("RVESV", "RVESV (mL)", Structure::RV, Function::Volume, "mL"),
      P("RVSV", "RVSV (mL)", Structure::RV, Function::StrokeVolume, "mL"),
      P("RVEF", "RVEF (%)", Structure::RV, Function::EjectionFraction, "%"),
      P("LAV_max", "LAV max (mL)", Structure::LA, Function::Volume, "mL"),
      P("LAV_min", "LAV min (mL)", Structure::LA, Function::Volume, "mL"),
      P("LASV", "LASV (mL)", Structure::LA, Function::StrokeVolume, "mL"),
      P("LAEF", "LAEF (%)", Structure::LA, Function::EjectionFraction, "%"),
      P("RAV_max", "RAV max (mL)", Structure::RA, Function::Volume, "mL"),
      P("RAV_min", "RAV min (mL)", Structure::RA, Function::Volume, "mL"),
      P("RASV", "RASV (mL)", Structure::RA, Function::StrokeVolume, "mL"),
      P("RAEF", "RAEF (%)", Structure::RA, Function::EjectionFraction, "%"),
      P("AAo_max_area", "AAo max area (mm2)", Structure::AAo, Function::Area,
        "mm2"),
      P("AAo_min_area", "AAo min area (mm2)", Structure::AAo, Function::Area,
        "mm2"),
      P("AAo_distensibility", "AAo distensibility", Structure::AAo,
        Function::Distensibility, "10^-3 mmHg^-1"),
      P("DAo_max_area", "DAo max area (mm2)", Structure::DAo, Function::Area,
        "mm2"),
      P("DAo_min_area", "DAo min area (mm2)", Structure::DAo, Function::Area,
        "mm2"),
      P("DAo_distensibility", "DAo distensibility", Structure::DAo,
        Function::Distensibility, "10^-3 mmHg^-1"),
  };
  return PhenotypeCatalog(std::move(e));
}

enum class FactorCategory : int {
  Demographics = 0,
  Anthropometrics,
  Lifestyle,
  RiskFactor
};
inline constexpr const char* kFactorCategoryNames[4] = {
    "Demographics", "Anthropometrics", "Lifestyle", "RiskFactor"};
inline std::string to_string(FactorCategory c) {
  return kFactorCategoryNames[static_cast<int>(c)];
}
inline FactorCategory factor_category_from_string(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == kFactorCategoryNames[i]) return static_cast<FactorCategory>(i);
  throw SchemaError("unknown factor category: " + s);
}

enum class FactorKind : int { Continuous = 0, Binary, Categorical };
inline constexpr const char* kFactorKindNames[3] = {"Continuous", "Binary",
                                                    "Categorical"};
inline std::string to_string(FactorKind k) {
  return kFactorKindNames[static_cast<int>(k)];
}

struct Factor {
  std::string id;
  std::string name;
  FactorCategory category = FactorCategory::Demographics;
  FactorKind kind = FactorKind::Continuous;
  int levels = 0;  // Categorical only, >= 2
};

inline constexpr int kNumDiseases = 9;
inline constexpr const char* kDiseaseNames[kNumDiseases] = {
    "Hypertension", "High cholesterol", "Cardiac disease",
    "PVD",          "Stroke",           "Asthma",
    "COPD",         "Diabetes",         "Depression"};

inline bool is_known_disease(const std::string& name) {
  for (const char* d : kDiseaseNames)
    if (name == d) return true;
  return false;
}

struct NumericColumn {
  std::string id;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;  // 1 = missing; value undefined there
};

// Immutable participants x columns table. Construct via the static factory;
// all accessors are const.
class Cohort {
 public:
  static Cohort create(std::vector<std::string> participant_ids,
                       std::vector<NumericColumn> phenotype_columns,
                       std::vector<NumericColumn> factor_columns,
                       std::vector<Factor> factor_meta,
                       std::vector<std::string> disease_names,
                       std::vector<std::vector<std::uint8_t>> disease_labels) {
    Cohort c;
    c.participant_ids_ = std::move(participant_ids);
    const std::size_t n = c.participant_ids_.size();
    {
      std::set<std::string> seen;
      for (const auto& id : c.participant_ids_)
        if (!seen.insert(id).second)
          throw SchemaError("duplicate participant id: " + id);
    }
    if (factor_meta.size() != factor_columns.size())
      throw SchemaError("factor metadata/column count mismatch");
    auto check = [n](const NumericColumn& col) {
      if (col.values.size() != n || col.missing.size() != n)
        throw SchemaError("column length mismatch: " + col.id);
    };
    for (const auto& col : phenotype_columns) check(col);
    for (const auto& col : factor_columns) check(col);
    if (disease_names.size() != disease_labels.size())
      throw SchemaError("disease name/label count mismatch");
    for (std::size_t j = 0; j < disease_names.size(); ++j) {
      if (!is_known_disease(disease_names[j]))
        throw SchemaError("unknown disease name: " + disease_names[j]);
      if (disease_labels[j].size() != n)
        throw SchemaError("disease column length mismatch: " +
                          disease_names[j]);
      for (auto v : disease_labels[j])
        if (v != 0 && v != 1)
          throw SchemaError("disease labels must be 0/1: " + disease_names[j]);
    }
    c.phenotype_columns_ = std::move(phenotype_columns);
    c.factor_columns_ = std::move(factor_columns);
    c.factor_meta_ = std::move(factor_meta);
    c.disease_names_ = std::move(disease_names);
    c.disease_labels_ = std::move(disease_labels);
    for (std::size_t i = 0; i < c.phenotype_columns_.size(); ++i)
      if (!c.pheno_index_.emplace(c.phenotype_columns_[i].id, i).second)
        throw SchemaError("duplicate phenotype column: " +
                          c.phenotype_columns_[i].id);
    for (std::size_t i = 0; i < c.factor_columns_.size(); ++i) {
      if (c.factor_columns_[i].id != c.factor_meta_[i].id)
        throw SchemaError("factor metadata order mismatch");
      if (!c.factor_index_.emplace(c.factor_columns_[i].id, i).second)
        throw SchemaError("duplicate factor column: " +
                          c.factor_columns_[i].id);
    }
    for (std::size_t i = 0; i < c.disease_names_.size(); ++i)
      if (!c.disease_index_.emplace(c.disease_names_[i], i).second)
        throw SchemaError("duplicate disease column: " + c.disease_names_[i]);
    c.digest_ = c.compute_digest();
    return c;
  }

  std::size_t size() const { return participant_ids_.size(); }
  const std::vector<std::string>& participant_ids() const {
    return participant_ids_;
  }
  const std::vector<NumericColumn>& phenotype_columns() const {
    return phenotype_columns_;
  }
  const std::vector<NumericColumn>& factor_columns() const {
    return factor_columns_;
  }
  const std::vector<Factor>& factor_meta() const { return factor_meta_; }
  const std::vector<std::string>& disease_names() const {
    return disease_names_;
  }

  bool has_phenotype(const std::string& id) const {
    return pheno_index_.count(id) != 0;
  }
  bool has_factor(const std::string& id) const {
    return factor_index_.count(id) != 0;
  }
  bool has_column(const std::string& id) const {
    return has_phenotype(id) || has_factor(id);
  }

  const NumericColumn& column(const std::string& id) const {
    if (auto it = pheno_index_.find(id); it != pheno_index_.end())
      return phenotype_columns_[it->second];
    if (auto it = factor_index_.find(id); it != factor_index_.end())
      return factor_columns_[it->second];
    throw SchemaError("unknown column id: " + id);
  }

  const Factor& factor(const std::string& id) const {
    auto it = factor_index_.find(id);
    if (it == factor_index_.end())
      throw SchemaError("unknown factor id: " + id);
    return factor_meta_[it->second];
  }

  const std::vector<std::uint8_t>& disease(const std::string& name) const {
    auto it = disease_index_.find(name);
    if (it == disease_index_.end())
      throw SchemaError("unknown disease column: " + name);
    return disease_labels_[it->second];
  }

  // Content digest; identifies the cohort in reports and memory cases.
  const std::string& digest() const { return digest_; }

 private:
  Cohort() = default;

  std::string compute_digest() const {
    rng::Digest d;
    d.mix(static_cast<std::uint64_t>(size()));
    for (const auto& id : participant_ids_) d.mix(id);
    auto mix_col = [&d](const NumericColumn& col) {
      d.mix(col.id);
      for (std::size_t i = 0; i < col.values.size(); ++i) {
        if (col.missing[i])
          d.mix(std::uint64_t{0xFFFF});
        else
          d.mix(col.values[i]);
      }
    };
    for (const auto& col : phenotype_columns_) mix_col(col);
    for (const auto& col : factor_columns_) mix_col(col);
    for (std::size_t j = 0; j < disease_names_.size(); ++j) {
      d.mix(disease_names_[j]);
      for (auto v : disease_labels_[j]) d.mix(std::uint64_t{v});
    }
    return d.hex();
  }

  std::vector<std::string> participant_ids_;
  std::vector<NumericColumn> phenotype_columns_;
  std::vector<NumericColumn> factor_columns_;
  std::vector<Factor> factor_meta_;
  std::vector<std::string> disease_names_;
  std::vector<std::vector<std::uint8_t>> disease_labels_;
  std::unordered_map<std::string, std::size_t> pheno_index_;
  std::unordered_map<std::string, std::size_t> factor_index_;
  std::unordered_map<std::string, std::size_t> disease_index_;
  std::string digest_;
};

// Row indices (ascending) where none of the listed columns is missing.
// An empty column list keeps every row.
inline std::vector<std::size_t> complete_cases(
    const Cohort& cohort, const std::vector<std::string>& column_ids) {
  std::vector<const std::vector<std::uint8_t>*> masks;
  masks.reserve(column_ids.size());
  for (const auto& id : column_ids) masks.push_back(&cohort.column(id).missing);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    bool ok = true;
    for (const auto* m : masks)
      if ((*m)[i]) {
        ok = false;
        break;
      }
    if (ok) out.push_back(i);
  }
  return out;
}

// One (phenotype, factor) edge. strength is on a signed correlation scale;
// relevance is filled by agents after the scan.
struct Association {
  std::string phenotype_id;
  std::string factor_id;
  double strength = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  double effect_size = 0.0;
  std::size_t n_complete = 0;
  double relevance = 0.0;

  Json to_json() const {
    return {{"phenotype_id", phenotype_id}, {"factor_id", factor_id},
            {"strength", strength},         {"p_raw", p_raw},
            {"p_adjusted", p_adjusted},     {"effect_size", effect_size},
            {"n_complete", n_complete},     {"relevance", relevance}};
  }
  static Association from_json(const Json& j) {
    Association a;
    a.phenotype_id = j.at("phenotype_id").get<std::string>();
    a.factor_id = j.at("factor_id").get<std::string>();
    a.strength = j.at("strength").get<double>();
    a.p_raw = j.at("p_raw").get<double>();
    a.p_adjusted = j.at("p_adjusted").get<double>();
    a.effect_size = j.at("effect_size").get<double>();
    a.n_complete = j.at("n_complete").get<std::size_t>();
    a.relevance = j.at("relevance").get<double>();
    return a;
  }
};

}  // namespace phewas
