#pragma once

// JSON schema for RegimeModel.
//
// {
//   "m": 2, "d": 1,
//   "Q": [[-0.5, 0.5], [0.5, -0.5]],     // nested rows, or flat row-major m*m
//   "g": [2, 3],
//   "sigma0": 1.0,
//   "r": [{"c0": 1, "c1": 1}, {"c0": 2, "c1": 1}],            // [regime]
//   "b": [[{"c0": 0, "c1": 1}, {"c0": -1, "c1": 1}]],         // [node][regime]
//   "sigma_bar": [[[{"c0": 1, "c1": 0}, {"c0": 2, "c1": 0}]]], // [node][brownian][regime]
//   "horizon": {"s": 0, "T": 0.5}
// }
//
// Any affine coefficient may also be written as a bare number (constant in t).

#include <mvhmm/error.hpp>
#include <mvhmm/model.hpp>

#include <json.hpp>

#include <fstream>
#include <string>

namespace mvhmm {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, const std::string& reason)
      : std::runtime_error(path + ": " + reason), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

namespace detail {

using Json = nlohmann::json;

inline const Json& member(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key, "missing key");
  return *it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

inline std::size_t count(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 1) {
    throw ParseError(path, "expected a positive integer");
  }
  return j.get<std::size_t>();
}

inline const Json& array_of(const Json& j, std::size_t n, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array");
  if (j.size() != n) {
    throw ParseError(path, "expected " + std::to_string(n) + " entries, got " +
                               std::to_string(j.size()));
  }
  return j;
}

inline Affine affine(const Json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_object()) throw ParseError(path, "expected {c0, c1} or a number");
  Affine a;
  a.c0 = number(member(j, "c0", path), path + ".c0");
  if (j.contains("c1")) a.c1 = number(j["c1"], path + ".c1");
  return a;
}

inline std::string idx(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline Json affine_json(const Affine& a) { return Json{{"c0", a.c0}, {"c1", a.c1}}; }

}  // namespace detail

inline RegimeModel model_from_json(const nlohmann::json& j, const std::string& root = "$") {
  using namespace detail;
  RegimeModel model;
  model.m = count(member(j, "m", root), root + ".m");
  model.d = count(member(j, "d", root), root + ".d");
  const auto m = model.m;
  const auto d = model.d;

  const auto& q = member(j, "Q", root);
  const std::string qp = root + ".Q";
  if (!q.is_array()) throw ParseError(qp, "expected an array");
  model.Q.resize(m * m);
  if (q.size() == m * m && !q[0].is_array()) {
    for (std::size_t k = 0; k < m * m; ++k) model.Q[k] = number(q[k], idx(qp, k));
  } else {
    array_of(q, m, qp);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& row = array_of(q[i], m, idx(qp, i));
      for (std::size_t k = 0; k < m; ++k) model.Q[i * m + k] = number(row[k], idx(idx(qp, i), k));
    }
  }

  const auto& g = array_of(member(j, "g", root), m, root + ".g");
  for (std::size_t i = 0; i < m; ++i) model.g.push_back(number(g[i], idx(root + ".g", i)));

  model.sigma0 = number(member(j, "sigma0", root), root + ".sigma0");

  const auto& r = array_of(member(j, "r", root), m, root + ".r");
  for (std::size_t i = 0; i < m; ++i) model.r.push_back(affine(r[i], idx(root + ".r", i)));

  const std::string bp = root + ".b";
  const auto& b = array_of(member(j, "b", root), d, bp);
  for (std::size_t l = 0; l < d; ++l) {
    const auto& bl = array_of(b[l], m, idx(bp, l));
    for (std::size_t i = 0; i < m; ++i) model.b.push_back(affine(bl[i], idx(idx(bp, l), i)));
  }

  const std::string sp = root + ".sigma_bar";
  const auto& sb = array_of(member(j, "sigma_bar", root), d, sp);
  for (std::size_t l = 0; l < d; ++l) {
    const auto& row = array_of(sb[l], d, idx(sp, l));
    for (std::size_t k = 0; k < d; ++k) {
      const auto& cell = array_of(row[k], m, idx(idx(sp, l), k));
      for (std::size_t i = 0; i < m; ++i) {
        model.sigma_bar.push_back(affine(cell[i], idx(idx(idx(sp, l), k), i)));
      }
    }
  }

  const auto& hz = member(j, "horizon", root);
  model.s = number(member(hz, "s", root + ".horizon"), root + ".horizon.s");
  model.T = number(member(hz, "T", root + ".horizon"), root + ".horizon.T");
  return model;
}

inline nlohmann::json model_to_json(const RegimeModel& model) {
  using detail::affine_json;
  using Json = nlohmann::json;
  Json j;
  j["m"] = model.m;
  j["d"] = model.d;
  Json q = Json::array();
  for (std::size_t i = 0; i < model.m; ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < model.m; ++k) row.push_back(model.q(i, k));
    q.push_back(row);
  }
  j["Q"] = q;
  j["g"] = model.g;
  j["sigma0"] = model.sigma0;
  Json r = Json::array();
  for (const auto& a : model.r) r.push_back(affine_json(a));
  j["r"] = r;
  Json b = Json::array();
  for (std::size_t l = 0; l < model.d; ++l) {
    Json bl = Json::array();
    for (std::size_t i = 0; i < model.m; ++i) bl.push_back(affine_json(model.b[l * model.m + i]));
    b.push_back(bl);
  }
  j["b"] = b;
  Json sb = Json::array();
  for (std::size_t l = 0; l < model.d; ++l) {
    Json row = Json::array();
    for (std::size_t k = 0; k < model.d; ++k) {
      Json cell = Json::array();
      for (std::size_t i = 0; i < model.m; ++i) {
        cell.push_back(affine_json(model.sigma_bar[(l * model.d + k) * model.m + i]));
      }
      row.push_back(cell);
    }
    sb.push_back(row);
  }
  j["sigma_bar"] = sb;
  j["horizon"] = {{"s", model.s}, {"T", model.T}};
  return j;
}

inline RegimeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open model file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, e.what());
  }
  return model_from_json(j);
}

}  // namespace mvhmm
