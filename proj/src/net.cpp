// SPDX-License-Identifier: Apache-2.0
#include "deepkd/net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("model needs >= 2 layer sizes");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("layer sizes must be positive");
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

MlpModel MlpModel::zeros(std::vector<std::size_t> dims, Activation act) {
  check_dims(dims);
  MlpModel m;
  m.dims = std::move(dims);
  m.act = act;
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    m.weights.emplace_back(m.dims[l + 1], m.dims[l], 0.0);
    m.biases.emplace_back(m.dims[l + 1], 0.0);
  }
  return m;
}

MlpModel MlpModel::he_init(std::vector<std::size_t> dims, Rng& rng, Activation act) {
  MlpModel m = zeros(std::move(dims), act);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(m.dims[l]));
    for (double& w : m.weights[l].data) w = stddev * rng.next_normal();
  }
  return m;
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l)
    n += weights[l].data.size() + biases[l].size();
  return n;
}

Vec64 MlpModel::flatten_params() const {
  Vec64 flat;
  flat.reserve(param_count());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
    flat.insert(flat.end(), biases[l].begin(), biases[l].end());
  }
  return flat;
}

void MlpModel::set_params(std::span<const double> flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("flat parameter length mismatch");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    for (double& w : weights[l].data) w = flat[pos++];
    for (double& b : biases[l]) b = flat[pos++];
  }
}

void MlpModel::add_delta(std::span<const double> delta) {
  if (delta.size() != param_count())
    throw std::invalid_argument("parameter delta length mismatch");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    for (double& w : weights[l].data) w += delta[pos++];
    for (double& b : biases[l]) b += delta[pos++];
  }
}

Mat64 forward(const MlpModel& model, const Mat64& inputs, ForwardTape* tape) {
  if (inputs.cols != model.in_dim())
    throw std::invalid_argument("input width does not match model");
  if (inputs.rows == 0) throw std::invalid_argument("empty batch");
  const std::size_t layers = model.num_layers();
  if (tape) {
    tape->pre.clear();
    tape->act.clear();
    tape->act.push_back(inputs);
  }

  Mat64 a = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    const Mat64& w = model.weights[l];
    const Vec64& b = model.biases[l];
    Mat64 z(a.rows, w.rows);
    for (std::size_t n = 0; n < a.rows; ++n) {
      const double* arow = a.data.data() + n * a.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double* wrow = w.data.data() + o * w.cols;
        double acc = b[o];
        for (std::size_t i = 0; i < w.cols; ++i) acc += wrow[i] * arow[i];
        z(n, o) = acc;
      }
    }
    if (tape) tape->pre.push_back(z);
    const bool hidden = l + 1 < layers;
    if (hidden && model.act == Activation::kRelu) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
    }
    if (tape) tape->act.push_back(z);
    a = std::move(z);
  }
  return a;
}

Vec64 backward_from_logit_grad(const MlpModel& model, const ForwardTape& tape,
                               const Mat64& dlogits) {
  const std::size_t layers = model.num_layers();
  if (tape.pre.size() != layers || tape.act.size() != layers + 1)
    throw std::invalid_argument("tape does not match model");
  const std::size_t batch = tape.act[0].rows;
  if (dlogits.rows != batch || dlogits.cols != model.out_dim())
    throw std::invalid_argument("logit gradient shape mismatch");

  Vec64 flat(model.param_count(), 0.0);
  // Per-layer offsets into the flattened parameter vector.
  std::vector<std::size_t> offset(layers);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offset[l] = pos;
    pos += model.weights[l].data.size() + model.biases[l].size();
  }

  Mat64 g = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    const Mat64& w = model.weights[l];
    const Mat64& a_prev = tape.act[l];
    double* dw = flat.data() + offset[l];
    double* db = dw + w.data.size();
    for (std::size_t n = 0; n < batch; ++n) {
      const double* grow = g.data.data() + n * g.cols;
      const double* arow = a_prev.data.data() + n * a_prev.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double go = grow[o];
        double* dwrow = dw + o * w.cols;
        for (std::size_t i = 0; i < w.cols; ++i) dwrow[i] += go * arow[i];
        db[o] += go;
      }
    }
    if (l > 0) {
      Mat64 gprev(batch, w.cols, 0.0);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* grow = g.data.data() + n * g.cols;
        double* prow = gprev.data.data() + n * gprev.cols;
        for (std::size_t o = 0; o < w.rows; ++o) {
          const double go = grow[o];
          const double* wrow = w.data.data() + o * w.cols;
          for (std::size_t i = 0; i < w.cols; ++i) prow[i] += go * wrow[i];
        }
        if (model.act == Activation::kRelu) {
          const double* zrow = tape.pre[l - 1].data.data() + n * w.cols;
          // Subgradient 0 at exactly 0.
          for (std::size_t i = 0; i < w.cols; ++i)
            if (!(zrow[i] > 0.0)) prow[i] = 0.0;
        }
      }
      g = std::move(gprev);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch);
  for (double& v : flat) v *= inv_n;
  return flat;
}

ParamGradTriple param_grad_triple(const MlpModel& model, const ForwardTape& tape,
                                  std::span<const LogitGradTriple> samples,
                                  const StreamWeights& w) {
  const std::size_t batch = tape.act.empty() ? 0 : tape.act[0].rows;
  if (samples.size() != batch)
    throw std::invalid_argument("one logit gradient triple per batch row required");
  const std::size_t classes = model.out_dim();
  Mat64 g_tog(batch, classes), g_tcg(batch, classes), g_ncg(batch, classes);
  for (std::size_t n = 0; n < batch; ++n) {
    const LogitGradTriple& s = samples[n];
    if (s.tog.size() != classes || s.tcg.size() != classes || s.ncg.size() != classes)
      throw std::invalid_argument("logit gradient width mismatch");
    for (std::size_t c = 0; c < classes; ++c) {
      g_tog(n, c) = w.tog * s.tog[c];
      g_tcg(n, c) = w.tcg * s.tcg[c];
      g_ncg(n, c) = w.ncg * s.ncg[c];
    }
  }
  ParamGradTriple out;
  out.tog = backward_from_logit_grad(model, tape, g_tog);
  out.tcg = backward_from_logit_grad(model, tape, g_tcg);
  out.ncg = backward_from_logit_grad(model, tape, g_ncg);
  return out;
}

void save_model(const MlpModel& model, const std::string& path) {
  // Refuse to persist a diverged model; the JSON grammar has no NaN/Inf.
  for (double v : model.flatten_params())
    if (!std::isfinite(v))
      throw std::invalid_argument("save_model: parameters contain non-finite values");
  std::string out = "{\n  \"dims\": [";
  for (std::size_t i = 0; i < model.dims.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(model.dims[i]);
  }
  out += "],\n  \"activation\": \"" + to_string(model.act) + "\",\n";
  out += "  \"weights\": [\n";
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    out += "    [";
    const Vec64& wd = model.weights[l].data;
    for (std::size_t i = 0; i < wd.size(); ++i) {
      if (i) out += ", ";
      out += format_double(wd[i]);
    }
    out += l + 1 < model.num_layers() ? "],\n" : "]\n";
  }
  out += "  ],\n  \"biases\": [\n";
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    out += "    [";
    for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
      if (i) out += ", ";
      out += format_double(model.biases[l][i]);
    }
    out += l + 1 < model.num_layers() ? "],\n" : "]\n";
  }
  out += "  ]\n}\n";
  write_file(path, out);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // e.byte is the offset of the first bad character.
    throw ParseError(path + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }

  try {
    std::vector<std::size_t> dims = j.at("dims").get<std::vector<std::size_t>>();
    const Activation act =
        activation_from_string(j.at("activation").get<std::string>());
    MlpModel m = MlpModel::zeros(std::move(dims), act);
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != m.num_layers() || biases.size() != m.num_layers())
      throw std::invalid_argument("layer count mismatch");
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      Vec64 wd = weights[l].get<Vec64>();
      Vec64 bd = biases[l].get<Vec64>();
      if (wd.size() != m.weights[l].data.size() || bd.size() != m.biases[l].size())
        throw std::invalid_argument("layer shape mismatch");
      for (double v : wd)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite weight");
      for (double v : bd)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite bias");
      m.weights[l].data = std::move(wd);
      m.biases[l] = std::move(bd);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

}  // namespace deepkd
