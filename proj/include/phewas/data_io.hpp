#pragma once

// Cohort ingestion and the seeded synthetic cohort generator. The generator
// is the ground-truth oracle for pipeline tests: it plants known
// phenotype-factor correlations through a Gaussian copula and is bit
// deterministic in (spec, seed) via counter-based PRNG streams per column.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phewas/domain.hpp"
#include "phewas/errors.hpp"
#include "phewas/linalg.hpp"
#include "phewas/prng.hpp"

namespace phewas::io {

// ---------------------------------------------------------------------------
// Synthetic cohorts
// ---------------------------------------------------------------------------

struct SynthPhenotype {
  std::string id;   // must exist in the reference catalog
  double mean = 0.0;
  double sd = 1.0;
};

struct SynthFactor {
  Factor meta;
  // Binary: latent z-threshold for the positive class (0 => prevalence 0.5).
  double binary_threshold = 0.0;
};

struct PlantedAssociation {
  std::string phenotype_id;
  std::string factor_id;
  double r = 0.0;
};

struct PlantedConfounder {
  std::string factor_id;
  std::vector<Structure> structures;
  double r = 0.0;
};

struct DiseaseModel {
  std::string name;  // one of the nine disease names
  double intercept = -1.0;
  std::vector<std::pair<std::string, double>> coefficients;  // column -> coef
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_participants = 0;
  std::vector<SynthPhenotype> phenotypes;
  std::vector<SynthFactor> factors;
  std::vector<PlantedAssociation> planted_associations;
  std::vector<PlantedConfounder> planted_confounders;
  std::vector<DiseaseModel> disease_models;
  std::map<std::string, double> missing_rate;  // column id -> rate in [0,0.5]
};

struct SynthReport {
  double pd_repair_delta = 0.0;
};

// Inverse standard normal CDF (Acklam's rational approximation, |err|<1.2e-9).
inline double inv_normal_cdf(double p) {
  if (p <= 0.0 || p >= 1.0)
    throw ValidationError("inv_normal_cdf: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

namespace detail {

// Target latent correlation. Phenotype-factor cells come from the planted
// entries; phenotype-phenotype cells are the factor-model implication
// sum_f r_{p1,f} r_{p2,f}, which keeps the matrix positive definite as long
// as each phenotype's squared loadings stay below 1.
inline linalg::Matrix build_target_correlation(const SynthSpec& spec,
                                               const PhenotypeCatalog& catalog) {
  const std::size_t d = spec.phenotypes.size();
  const std::size_t m = spec.factors.size();
  const std::size_t n = d + m;
  std::map<std::string, std::size_t> pheno_idx, factor_idx;
  for (std::size_t i = 0; i < d; ++i) pheno_idx[spec.phenotypes[i].id] = i;
  for (std::size_t i = 0; i < m; ++i)
    factor_idx[spec.factors[i].meta.id] = i;

  // loadings[p][f]
  std::vector<std::vector<double>> load(d, std::vector<double>(m, 0.0));
  for (const auto& pa : spec.planted_associations) {
    auto pi = pheno_idx.find(pa.phenotype_id);
    auto fi = factor_idx.find(pa.factor_id);
    if (pi == pheno_idx.end())
      throw ValidationError("synth: planted association references unknown phenotype " +
                            pa.phenotype_id);
    if (fi == factor_idx.end())
      throw ValidationError("synth: planted association references unknown factor " +
                            pa.factor_id);
    if (std::fabs(pa.r) > 0.9)
      throw ValidationError("synth: |target r| must be <= 0.9");
    load[pi->second][fi->second] += pa.r;
  }
  for (const auto& pc : spec.planted_confounders) {
    auto fi = factor_idx.find(pc.factor_id);
    if (fi == factor_idx.end())
      throw ValidationError("synth: planted confounder references unknown factor " +
                            pc.factor_id);
    if (std::fabs(pc.r) > 0.9)
      throw ValidationError("synth: |target r| must be <= 0.9");
    for (std::size_t p = 0; p < d; ++p) {
      const Phenotype* ph = catalog.find(spec.phenotypes[p].id);
      if (!ph)
        throw ValidationError("synth: phenotype not in catalog: " +
                              spec.phenotypes[p].id);
      if (std::find(pc.structures.begin(), pc.structures.end(),
                    ph->structure) != pc.structures.end())
        load[p][fi->second] += pc.r;
    }
  }
  for (std::size_t p = 0; p < d; ++p) {
    double ss = 0.0;
    for (double l : load[p]) ss += l * l;
    if (ss > 0.95)
      throw ValidationError(
          "synth: combined planted loadings too strong for phenotype " +
          spec.phenotypes[p].id);
  }

  linalg::Matrix corr = linalg::Matrix::identity(n);
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t f = 0; f < m; ++f) {
      corr(p, d + f) = load[p][f];
      corr(d + f, p) = load[p][f];
    }
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = p + 1; q < d; ++q) {
      double s = 0.0;
      for (std::size_t f = 0; f < m; ++f) s += load[p][f] * load[q][f];
      corr(p, q) = s;
      corr(q, p) = s;
    }
  return corr;
}

}  // namespace detail

inline Cohort generate_synthetic_cohort(const SynthSpec& spec,
                                        const PhenotypeCatalog& catalog,
                                        SynthReport* report = nullptr) {
  if (spec.n_participants == 0)
    throw ValidationError("synth: n_participants must be positive");
  for (const auto& [col, rate] : spec.missing_rate)
    if (rate < 0.0 || rate > 0.5)
      throw ValidationError("synth: missing_rate must be in [0, 0.5]");
  const std::size_t d = spec.phenotypes.size();
  const std::size_t m = spec.factors.size();
  const std::size_t n_cols = d + m;
  const std::size_t n = spec.n_participants;

  linalg::Matrix target = detail::build_target_correlation(spec, catalog);
  linalg::PdRepair repair = linalg::nearest_pd_correlation(target);
  if (repair.frobenius_delta > 0.05)
    throw ValidationError("synth: correlation structure infeasible (repair delta " +
                          std::to_string(repair.frobenius_delta) + ")");
  if (report) report->pd_repair_delta = repair.frobenius_delta;
  // Jitter the diagonal slightly so Cholesky succeeds at the clip boundary.
  for (std::size_t i = 0; i < n_cols; ++i)
    repair.matrix(i, i) += 1e-10;
  linalg::Matrix chol = linalg::cholesky(repair.matrix);

  // Independent normals, one PRNG stream per latent column.
  std::vector<std::string> col_ids;
  col_ids.reserve(n_cols);
  for (const auto& p : spec.phenotypes) col_ids.push_back(p.id);
  for (const auto& f : spec.factors) col_ids.push_back(f.meta.id);
  std::vector<std::uint64_t> streams;
  for (const auto& id : col_ids)
    streams.push_back(rng::fnv1a("latent." + id));

  // latents[col][row]: correlated standard normals.
  std::vector<std::vector<double>> latents(n_cols,
                                           std::vector<double>(n, 0.0));
  std::vector<double> u(n_cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_cols; ++j)
      u[j] = rng::normal(spec.seed, streams[j], i);
    for (std::size_t j = 0; j < n_cols; ++j) {
      double z = 0.0;
      for (std::size_t k = 0; k <= j; ++k) z += chol(j, k) * u[k];
      latents[j][i] = z;
    }
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("P" + std::to_string(i));

  auto missing_mask = [&](const std::string& col) {
    std::vector<std::uint8_t> mask(n, 0);
    auto it = spec.missing_rate.find(col);
    if (it == spec.missing_rate.end() || it->second <= 0.0) return mask;
    const std::uint64_t stream = rng::fnv1a("miss." + col);
    for (std::size_t i = 0; i < n; ++i)
      mask[i] = rng::uniform(spec.seed, stream, i) < it->second ? 1 : 0;
    return mask;
  };

  std::vector<NumericColumn> pheno_cols;
  for (std::size_t p = 0; p < d; ++p) {
    NumericColumn col;
    col.id = spec.phenotypes[p].id;
    col.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      col.values[i] =
          spec.phenotypes[p].mean + spec.phenotypes[p].sd * latents[p][i];
    col.missing = missing_mask(col.id);
    pheno_cols.push_back(std::move(col));
  }

  std::vector<NumericColumn> factor_cols;
  std::vector<Factor> factor_meta;
  for (std::size_t f = 0; f < m; ++f) {
    const SynthFactor& sf = spec.factors[f];
    NumericColumn col;
    col.id = sf.meta.id;
    col.values.resize(n);
    const std::vector<double>& z = latents[d + f];
    switch (sf.meta.kind) {
      case FactorKind::Continuous:
        for (std::size_t i = 0; i < n; ++i) col.values[i] = z[i];
        break;
      case FactorKind::Binary:
        for (std::size_t i = 0; i < n; ++i)
          col.values[i] = z[i] > sf.binary_threshold ? 1.0 : 0.0;
        break;
      case FactorKind::Categorical: {
        if (sf.meta.levels < 2)
          throw ValidationError("synth: categorical factor needs >= 2 levels");
        std::vector<double> cuts;
        for (int k = 1; k < sf.meta.levels; ++k)
          cuts.push_back(inv_normal_cdf(static_cast<double>(k) /
                                        static_cast<double>(sf.meta.levels)));
        for (std::size_t i = 0; i < n; ++i) {
          int level = 0;
          while (level < sf.meta.levels - 1 &&
                 z[i] > cuts[static_cast<std::size_t>(level)])
            ++level;
          col.values[i] = static_cast<double>(level);
        }
        break;
      }
    }
    col.missing = missing_mask(col.id);
    factor_cols.push_back(std::move(col));
    factor_meta.push_back(sf.meta);
  }

  // Disease draws from logistic models over standardized latents.
  std::map<std::string, std::size_t> col_index;
  for (std::size_t j = 0; j < n_cols; ++j) col_index[col_ids[j]] = j;
  std::vector<std::string> disease_names;
  std::vector<std::vector<std::uint8_t>> disease_labels;
  for (const auto& dm : spec.disease_models) {
    if (!is_known_disease(dm.name))
      throw ValidationError("synth: unknown disease name: " + dm.name);
    std::vector<std::uint8_t> labels(n, 0);
    const std::uint64_t stream = rng::fnv1a("disease." + dm.name);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = dm.intercept;
      for (const auto& [cid, coef] : dm.coefficients) {
        auto it = col_index.find(cid);
        if (it == col_index.end())
          throw ValidationError("synth: disease model references unknown column " +
                                cid);
        eta += coef * latents[it->second][i];
      }
      const double prob = 1.0 / (1.0 + std::exp(-eta));
      labels[i] = rng::uniform(spec.seed, stream, i) < prob ? 1 : 0;
    }
    disease_names.push_back(dm.name);
    disease_labels.push_back(std::move(labels));
  }

  return Cohort::create(std::move(ids), std::move(pheno_cols),
                        std::move(factor_cols), std::move(factor_meta),
                        std::move(disease_names), std::move(disease_labels));
}

inline SynthSpec synth_spec_from_json(const Json& j) {
  SynthSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.n_participants = j.at("n_participants").get<std::size_t>();
  for (const auto& p : j.at("phenotypes")) {
    SynthPhenotype sp;
    sp.id = p.at("id").get<std::string>();
    sp.mean = p.value("mean", 0.0);
    sp.sd = p.value("sd", 1.0);
    s.phenotypes.push_back(std::move(sp));
  }
  for (const auto& f : j.at("factors")) {
    SynthFactor sf;
    sf.meta.id = f.at("id").get<std::string>();
    sf.meta.name = f.value("name", sf.meta.id);
    sf.meta.category =
        factor_category_from_string(f.value("category", "Demographics"));
    const std::string kind = f.value("kind", "Continuous");
    if (kind == "Continuous")
      sf.meta.kind = FactorKind::Continuous;
    else if (kind == "Binary")
      sf.meta.kind = FactorKind::Binary;
    else if (kind == "Categorical")
      sf.meta.kind = FactorKind::Categorical;
    else
      throw SchemaError("synth spec: unknown factor kind " + kind);
    sf.meta.levels = f.value("levels", 0);
    sf.binary_threshold = f.value("binary_threshold", 0.0);
    s.factors.push_back(std::move(sf));
  }
  const Json planted = j.value("planted_associations", Json::array());
  for (const auto& a : planted)
    s.planted_associations.push_back({a.at("phenotype").get<std::string>(),
                                      a.at("factor").get<std::string>(),
                                      a.at("r").get<double>()});
  const Json confounders = j.value("planted_confounders", Json::array());
  for (const auto& c : confounders) {
    PlantedConfounder pc;
    pc.factor_id = c.at("factor").get<std::string>();
    for (const auto& st : c.at("structures"))
      pc.structures.push_back(structure_from_string(st.get<std::string>()));
    pc.r = c.at("r").get<double>();
    s.planted_confounders.push_back(std::move(pc));
  }
  const Json disease_models = j.value("disease_models", Json::object());
  for (const auto& [name, dm] : disease_models.items()) {
    DiseaseModel model;
    model.name = name;
    model.intercept = dm.value("intercept", -1.0);
    const Json coefs = dm.value("coefficients", Json::object());
    for (const auto& [cid, coef] : coefs.items())
      model.coefficients.emplace_back(cid, coef.get<double>());
    s.disease_models.push_back(std::move(model));
  }
  const Json missing = j.value("missing_rate", Json::object());
  for (const auto& [cid, rate] : missing.items())
    s.missing_rate[cid] = rate.get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Fixed 9-significant-digit formatting keeps generator output byte
// reproducible across platforms.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_cohort_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TransportError("cannot open for write: " + path);
  out << "participant_id";
  for (const auto& col : cohort.phenotype_columns()) out << ",pheno." << col.id;
  for (const auto& col : cohort.factor_columns()) out << ",factor." << col.id;
  for (const auto& name : cohort.disease_names()) out << ",disease." << name;
  out << "\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    out << cohort.participant_ids()[i];
    for (const auto& col : cohort.phenotype_columns()) {
      out << ",";
      if (!col.missing[i]) out << format_number(col.values[i]);
    }
    for (const auto& col : cohort.factor_columns()) {
      out << ",";
      if (!col.missing[i]) out << format_number(col.values[i]);
    }
    for (const auto& name : cohort.disease_names())
      out << "," << static_cast<int>(cohort.disease(name)[i]);
    out << "\n";
  }
  if (!out) throw TransportError("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Factor kind inference from data: {0,1} values => Binary; small integer
// level sets => Categorical; everything else Continuous.
inline Factor infer_factor(const NumericColumn& col) {
  Factor f;
  f.id = col.id;
  f.name = col.id;
  f.category = FactorCategory::Demographics;
  bool all_binary = true, all_integer = true;
  std::set<long long> levels;
  for (std::size_t i = 0; i < col.values.size(); ++i) {
    if (col.missing[i]) continue;
    const double v = col.values[i];
    if (v != 0.0 && v != 1.0) all_binary = false;
    if (v != std::floor(v) || std::fabs(v) > 1e6) {
      all_integer = false;
      break;
    }
    levels.insert(static_cast<long long>(v));
  }
  if (all_integer && all_binary) {
    f.kind = FactorKind::Binary;
  } else if (all_integer && levels.size() >= 2 && levels.size() <= 10) {
    f.kind = FactorKind::Categorical;
    f.levels = static_cast<int>(levels.size());
  } else {
    f.kind = FactorKind::Continuous;
  }
  return f;
}

}  // namespace detail

inline Cohort load_cohort_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("empty CSV: " + path);
  const auto cols = detail::split_csv_line(header);
  if (cols.empty() || cols[0] != "participant_id")
    throw SchemaError("CSV header must start with participant_id");

  struct ColRef {
    enum Kind { Pheno, Fact, Disease } kind;
    std::string id;
  };
  std::vector<ColRef> refs;
  for (std::size_t j = 1; j < cols.size(); ++j) {
    const std::string& h = cols[j];
    if (h.rfind("pheno.", 0) == 0)
      refs.push_back({ColRef::Pheno, h.substr(6)});
    else if (h.rfind("factor.", 0) == 0)
      refs.push_back({ColRef::Fact, h.substr(7)});
    else if (h.rfind("disease.", 0) == 0)
      refs.push_back({ColRef::Disease, h.substr(8)});
    else
      throw SchemaError("unrecognized CSV column header: " + h);
  }

  std::vector<std::string> ids;
  std::vector<NumericColumn> pheno_cols, factor_cols;
  std::vector<std::string> disease_names;
  std::vector<std::vector<std::uint8_t>> disease_labels;
  std::vector<std::size_t> pheno_pos, factor_pos, disease_pos;
  for (std::size_t j = 0; j < refs.size(); ++j) {
    switch (refs[j].kind) {
      case ColRef::Pheno:
        pheno_pos.push_back(j);
        pheno_cols.push_back({refs[j].id, {}, {}});
        break;
      case ColRef::Fact:
        factor_pos.push_back(j);
        factor_cols.push_back({refs[j].id, {}, {}});
        break;
      case ColRef::Disease:
        disease_pos.push_back(j);
        disease_names.push_back(refs[j].id);
        disease_labels.emplace_back();
        break;
    }
  }

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != refs.size() + 1)
      throw SchemaError("CSV row " + std::to_string(row + 1) +
                        ": wrong cell count");
    ids.push_back(cells[0]);
    auto parse_cell = [&](std::size_t pos, NumericColumn& col) {
      const std::string& cell = cells[pos + 1];
      if (cell.empty()) {
        col.values.push_back(0.0);
        col.missing.push_back(1);
        return;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing");
        col.values.push_back(v);
        col.missing.push_back(0);
      } catch (const std::exception&) {
        throw SchemaError("CSV row " + std::to_string(row + 1) + ", column " +
                          col.id + ": non-numeric cell '" + cell + "'");
      }
    };
    for (std::size_t k = 0; k < pheno_pos.size(); ++k)
      parse_cell(pheno_pos[k], pheno_cols[k]);
    for (std::size_t k = 0; k < factor_pos.size(); ++k)
      parse_cell(factor_pos[k], factor_cols[k]);
    for (std::size_t k = 0; k < disease_pos.size(); ++k) {
      const std::string& cell = cells[disease_pos[k] + 1];
      if (cell == "0")
        disease_labels[k].push_back(0);
      else if (cell == "1")
        disease_labels[k].push_back(1);
      else
        throw SchemaError("CSV row " + std::to_string(row + 1) +
                          ", disease " + disease_names[k] +
                          ": label must be 0 or 1, got '" + cell + "'");
    }
    ++row;
  }

  std::vector<Factor> factor_meta;
  factor_meta.reserve(factor_cols.size());
  for (const auto& col : factor_cols)
    factor_meta.push_back(detail::infer_factor(col));

  return Cohort::create(std::move(ids), std::move(pheno_cols),
                        std::move(factor_cols), std::move(factor_meta),
                        std::move(disease_names), std::move(disease_labels));
}

}  // namespace phewas::io
