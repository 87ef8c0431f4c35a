#include "fbeuler/json_io.hpp"

#include <fstream>

#include <json.hpp>

#include "fbeuler/errors.hpp"

namespace fbeuler {

using nlohmann::json;

namespace {

json matrix_series_to_json(const std::vector<Eigen::MatrixXd>& series) {
  json arr = json::array();
  for (const auto& m : series) {
    json t = json::array();
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) t.push_back(m(r, c));
    arr.push_back(std::move(t));
  }
  return arr;
}

json vector_series_to_json(const std::vector<Eigen::VectorXd>& series) {
  json arr = json::array();
  for (const auto& v : series) {
    json t = json::array();
    for (int r = 0; r < v.size(); ++r) t.push_back(v[r]);
    arr.push_back(std::move(t));
  }
  return arr;
}

}  // namespace

std::string state_to_json(const LagrangianState& state) {
  json doc;
  doc["grid"] = {{"n_radial", state.grid->n_radial()},
                 {"n_angular", state.grid->n_angular()}};
  json t = json::array();
  for (int i = 0; i < state.t_nodes.size(); ++i) t.push_back(state.t_nodes[i]);
  doc["t_nodes"] = std::move(t);
  doc["fields"]["x"] = matrix_series_to_json(state.x);
  doc["fields"]["v"] = matrix_series_to_json(state.v);
  doc["fields"]["h"] = vector_series_to_json(state.h);
  return doc.dump();
}

LagrangianState state_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw IoFailure(std::string("bad state document: ") + e.what());
  }
  LagrangianState s;
  const int nr = doc.at("grid").at("n_radial").get<int>();
  const int na = doc.at("grid").at("n_angular").get<int>();
  s.grid = make_grid(nr, na);
  const auto& tn = doc.at("t_nodes");
  s.t_nodes.resize(tn.size());
  for (size_t i = 0; i < tn.size(); ++i) s.t_nodes[i] = tn[i].get<double>();
  const int nn = s.grid->n_nodes();
  const int n = s.grid->dim();
  auto read_mats = [&](const json& arr, int cols) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& t : arr) {
      if (static_cast<int>(t.size()) != nn * cols)
        throw IoFailure("field slice has wrong length");
      Eigen::MatrixXd m(nn, cols);
      int q = 0;
      for (int r = 0; r < nn; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = t[q++].get<double>();
      out.push_back(std::move(m));
    }
    return out;
  };
  s.x = read_mats(doc.at("fields").at("x"), n);
  s.v = read_mats(doc.at("fields").at("v"), n);
  for (const auto& t : doc.at("fields").at("h")) {
    Eigen::VectorXd hv(nn);
    if (static_cast<int>(t.size()) != nn) throw IoFailure("h slice has wrong length");
    for (int r = 0; r < nn; ++r) hv[r] = t[r].get<double>();
    s.h.push_back(std::move(hv));
  }
  return s;
}

void save_state(const LagrangianState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path);
  out << state_to_json(state);
  if (!out) throw IoFailure("write failed for " + path);
}

LagrangianState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return state_from_json(text);
}

}  // namespace fbeuler
