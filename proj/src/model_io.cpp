#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "kroa/edmd.hpp"
#include "kroa/error.hpp"

namespace kroa::edmd {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "kroa-koopman-model";
constexpr int kVersion = 1;

// JSON has no infinity; non-finite diagnostics are written as strings.
Json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw InvalidInput("expected a number in model file");
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw InvalidInput(std::string("model file lacks field '") + key + "'");
  }
  return j.at(key);
}

std::vector<double> doubles(const Json& j, std::size_t expected, const char* what) {
  if (!j.is_array() || j.size() != expected) {
    throw InvalidInput(std::string("model file field '") + what + "' has " +
                       std::to_string(j.is_array() ? j.size() : 0) + " entries, expected " +
                       std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : j) {
    if (!v.is_number()) throw InvalidInput(std::string("non-numeric entry in '") + what + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from(const Json& j, std::size_t expected, const char* what) {
  const auto v = doubles(j, expected, what);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_model(const KoopmanModel& model, std::ostream& out) {
  const auto& spec = model.spec();
  const int d = model.size();
  const int n = model.dimension();

  Json basis;
  basis["family"] = std::string(basis::family_name(spec.family()));
  basis["dimension"] = n;
  basis["max_degree"] = spec.index_set().max_degree;
  basis["q"] = spec.index_set().q;
  Json indices = Json::array();
  for (const auto& alpha : spec.index_set().indices) indices.push_back(alpha);
  basis["indices"] = std::move(indices);
  if (spec.scale().is_identity()) {
    basis["scale"] = nullptr;
  } else {
    basis["scale"] = {{"shift", vector_json(spec.scale().shift)},
                      {"factor", vector_json(spec.scale().factor)}};
  }

  Json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["basis"] = std::move(basis);
  doc["dictionary_size"] = d;

  Json u = Json::array();
  const auto& U = model.koopman_matrix();
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) u.push_back(U(r, c));
  }
  doc["koopman_matrix"] = std::move(u);

  Json mu = Json::array();
  for (int i = 0; i < d; ++i) {
    mu.push_back(model.eigenvalues()(i).real());
    mu.push_back(model.eigenvalues()(i).imag());
  }
  doc["eigenvalues"] = std::move(mu);

  Json xi = Json::array();
  for (int c = 0; c < d; ++c) {
    Json col = Json::array();
    for (int r = 0; r < d; ++r) {
      col.push_back(model.eigenvectors()(r, c).real());
      col.push_back(model.eigenvectors()(r, c).imag());
    }
    xi.push_back(std::move(col));
  }
  doc["eigenvectors"] = std::move(xi);

  Json inj = Json::array();
  for (const auto& pos : spec.injective_positions()) inj.push_back({pos.coordinate, pos.position});
  doc["injective_positions"] = std::move(inj);

  const auto& diag = model.diagnostics();
  doc["diagnostics"] = {{"pair_count", diag.pair_count},
                        {"residual", number(diag.residual)},
                        {"relative_residual", number(diag.relative_residual)},
                        {"g_condition", number(diag.g_condition)},
                        {"g_rank", diag.g_rank},
                        {"cholesky", diag.cholesky},
                        {"spectral_residual", number(diag.spectral_residual)},
                        {"warnings", diag.warnings}};
  out << doc.dump(1) << '\n';
}

void save_model(const KoopmanModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  write_model(model, out);
  if (!out) throw InvalidInput("failed writing '" + path + "'");
}

KoopmanModel read_model(std::istream& in) {
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput(std::string("model file is not valid JSON: ") + ex.what());
  }
  try {
    if (field(doc, "format") != kFormat) throw InvalidInput("not a Koopman model file");
    const int version = field(doc, "version").get<int>();
    if (version != kVersion) {
      throw InvalidInput("unsupported model file version " + std::to_string(version));
    }

    const Json& b = field(doc, "basis");
    const auto family = basis::parse_family(field(b, "family").get<std::string>());
    basis::MultiIndexSet set;
    set.dimension = field(b, "dimension").get<int>();
    set.max_degree = field(b, "max_degree").get<int>();
    set.q = number(field(b, "q"));
    for (const auto& alpha : field(b, "indices")) {
      set.indices.push_back(alpha.get<basis::MultiIndex>());
    }
    basis::DomainScale scale;
    const Json& s = field(b, "scale");
    if (!s.is_null()) {
      const auto n = static_cast<std::size_t>(set.dimension);
      scale.shift = vector_from(field(s, "shift"), n, "shift");
      scale.factor = vector_from(field(s, "factor"), n, "factor");
    }
    BasisSpec spec(family, std::move(set), std::move(scale));

    const int d = field(doc, "dictionary_size").get<int>();
    if (d != spec.size()) {
      throw InvalidInput("dictionary_size " + std::to_string(d) + " does not match the " +
                         std::to_string(spec.size()) + " stored indices");
    }
    const auto du = static_cast<std::size_t>(d);

    const auto u = doubles(field(doc, "koopman_matrix"), du * du, "koopman_matrix");
    Eigen::MatrixXd U(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) U(r, c) = u[static_cast<std::size_t>(r) * du + c];
    }
    const auto m = doubles(field(doc, "eigenvalues"), 2 * du, "eigenvalues");
    Eigen::VectorXcd mu(d);
    for (int i = 0; i < d; ++i) mu(i) = Complex(m[2 * i], m[2 * i + 1]);

    const Json& xi = field(doc, "eigenvectors");
    if (!xi.is_array() || xi.size() != du) throw InvalidInput("eigenvectors has wrong shape");
    Eigen::MatrixXcd Xi(d, d);
    for (int c = 0; c < d; ++c) {
      const auto col = doubles(xi[static_cast<std::size_t>(c)], 2 * du, "eigenvectors");
      for (int r = 0; r < d; ++r) Xi(r, c) = Complex(col[2 * r], col[2 * r + 1]);
    }

    const Json& inj = field(doc, "injective_positions");
    if (!inj.is_array() || inj.size() != static_cast<std::size_t>(spec.dimension())) {
      throw InvalidInput("injective_positions has wrong shape");
    }
    for (std::size_t j = 0; j < inj.size(); ++j) {
      const auto& expect = spec.injective_positions()[j];
      if (inj[j].size() != 2 || inj[j][0].get<int>() != expect.coordinate ||
          inj[j][1].get<int>() != expect.position) {
        throw InvalidInput("injective_positions disagree with the stored indices");
      }
    }

    const Json& dj = field(doc, "diagnostics");
    FitDiagnostics diag;
    diag.pair_count = field(dj, "pair_count").get<std::int64_t>();
    diag.dictionary_size = d;
    diag.residual = number(field(dj, "residual"));
    diag.relative_residual = number(field(dj, "relative_residual"));
    diag.g_condition = number(field(dj, "g_condition"));
    diag.g_rank = field(dj, "g_rank").get<int>();
    diag.cholesky = field(dj, "cholesky").get<bool>();
    diag.spectral_residual = number(field(dj, "spectral_residual"));
    diag.warnings = field(dj, "warnings").get<std::vector<std::string>>();

    return KoopmanModel(std::move(spec), std::move(U), std::move(mu), std::move(Xi),
                        std::move(diag));
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput(std::string("model file has a malformed field: ") + ex.what());
  }
}

KoopmanModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open model file '" + path + "'");
  return read_model(in);
}

}  // namespace kroa::edmd
