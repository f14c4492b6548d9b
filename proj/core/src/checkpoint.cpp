#include "brdro/models.hpp"

#include <sstream>
#include <string>

#include "brdro/csv.hpp"
#include "brdro/errors.hpp"

namespace brdro {
namespace {

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

Eigen::VectorXd column(const ParamTree& t, std::string_view name, Eigen::Index rows) {
  const Eigen::MatrixXd& m = t.at(name);
  if (m.rows() != rows || m.cols() != 1) {
    throw InputError("parameter entry '" + std::string(name) + "' has the wrong shape");
  }
  return m.col(0);
}

double scalar_at(const ParamTree& t, std::string_view name) {
  const Eigen::MatrixXd& m = t.at(name);
  if (m.size() != 1) throw InputError("parameter entry '" + std::string(name) + "' is not a scalar");
  return m(0, 0);
}

constexpr const char* kHeadNames[2] = {"adversary.head_neg", "adversary.head_pos"};

}  // namespace

ParamTree to_param_tree(const LearnerParams& p) {
  ParamTree t;
  if (p.kind == LearnerKind::linear) {
    t.add("learner.w", p.w);
    t.add("learner.b", scalar(p.b));
  } else {
    t.add("learner.hidden_w", p.hidden_w);
    t.add("learner.hidden_b", p.hidden_b);
    t.add("learner.out_w", p.out_w);
    t.add("learner.out_b", scalar(p.out_b));
  }
  return t;
}

LearnerParams learner_from_tree(const ParamTree& t, const LearnerParams& like) {
  LearnerParams p = like;
  if (p.kind == LearnerKind::linear) {
    p.w = column(t, "learner.w", like.w.size());
    p.b = scalar_at(t, "learner.b");
    return p;
  }
  const Eigen::MatrixXd& hw = t.at("learner.hidden_w");
  if (hw.rows() != like.hidden_w.rows() || hw.cols() != like.hidden_w.cols()) {
    throw InputError("parameter entry 'learner.hidden_w' has the wrong shape");
  }
  p.hidden_w = hw;
  p.hidden_b = column(t, "learner.hidden_b", like.hidden_b.size());
  p.out_w = column(t, "learner.out_w", like.out_w.size());
  p.out_b = scalar_at(t, "learner.out_b");
  return p;
}

ParamTree to_param_tree(const AdversaryParams& p) {
  ParamTree t;
  if (p.kind == AdversaryKind::vib) {
    t.add("adversary.enc_w", p.enc_w);
    t.add("adversary.enc_b", p.enc_b);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    t.add(std::string(kHeadNames[k]) + ".w", p.heads[k].w);
    t.add(std::string(kHeadNames[k]) + ".b", scalar(p.heads[k].b));
  }
  return t;
}

AdversaryParams adversary_from_tree(const ParamTree& t, const AdversaryParams& like) {
  AdversaryParams p = like;
  if (p.kind == AdversaryKind::vib) {
    const Eigen::MatrixXd& ew = t.at("adversary.enc_w");
    if (ew.rows() != like.enc_w.rows() || ew.cols() != like.enc_w.cols()) {
      throw InputError("parameter entry 'adversary.enc_w' has the wrong shape");
    }
    p.enc_w = ew;
    p.enc_b = column(t, "adversary.enc_b", like.enc_b.size());
  }
  for (std::size_t k = 0; k < 2; ++k) {
    p.heads[k].w = column(t, std::string(kHeadNames[k]) + ".w", like.heads[k].w.size());
    p.heads[k].b = scalar_at(t, std::string(kHeadNames[k]) + ".b");
  }
  return p;
}

ParamTree merge_trees(const ParamTree& a, const ParamTree& b) {
  ParamTree out = a;
  for (const auto& e : b.entries()) {
    out.add(e.name, e.value);
  }
  return out;
}

ParamTree checkpoint_tree(const LearnerParams& learner, const AdversaryParams* adversary) {
  ParamTree t = to_param_tree(learner);
  t.add("meta.learner.kind", scalar(learner.kind == LearnerKind::linear ? 0.0 : 1.0));
  t.add("meta.learner.l2_reg", scalar(learner.l2_reg));
  if (adversary != nullptr) {
    t = merge_trees(t, to_param_tree(*adversary));
    t.add("meta.adversary.kind", scalar(static_cast<double>(static_cast<int>(adversary->kind))));
    t.add("meta.adversary.latent_dim", scalar(adversary->latent_dim));
    t.add("meta.adversary.beta", scalar(adversary->beta));
    t.add("meta.adversary.beta_vib", scalar(adversary->beta_vib));
  }
  return t;
}

LearnerParams learner_from_checkpoint(const ParamTree& t) {
  const double l2 = scalar_at(t, "meta.learner.l2_reg");
  if (scalar_at(t, "meta.learner.kind") == 0.0) {
    const Eigen::MatrixXd& w = t.at("learner.w");
    return learner_from_tree(t, LearnerParams::linear(w.rows(), l2));
  }
  const Eigen::MatrixXd& hw = t.at("learner.hidden_w");
  return learner_from_tree(t, LearnerParams::mlp(hw.cols(), hw.rows(), l2));
}

std::optional<AdversaryParams> adversary_from_checkpoint(const ParamTree& t) {
  if (!t.contains("meta.adversary.kind")) return std::nullopt;
  const int code = static_cast<int>(scalar_at(t, "meta.adversary.kind"));
  if (code < 0 || code > 2) throw InputError("checkpoint: unknown adversary kind");
  const auto kind = static_cast<AdversaryKind>(code);
  const double beta = scalar_at(t, "meta.adversary.beta");
  const double beta_vib = scalar_at(t, "meta.adversary.beta_vib");
  if (kind == AdversaryKind::vib) {
    const Eigen::MatrixXd& ew = t.at("adversary.enc_w");
    AdversaryParams like = AdversaryParams::vib(ew.cols(), static_cast<int>(scalar_at(t, "meta.adversary.latent_dim")), beta_vib);
    like.beta = beta;
    return adversary_from_tree(t, like);
  }
  AdversaryParams like = AdversaryParams::linear(kind, t.at("adversary.head_neg.w").rows(), beta);
  like.beta_vib = beta_vib;
  return adversary_from_tree(t, like);
}

void save_checkpoint(const ParamTree& tree, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kCheckpointHeader << '\n';
  for (const auto& e : tree.entries()) {
    out << e.name << ' ' << e.value.rows() << ' ' << e.value.cols();
    for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        out << ' ' << format_double(e.value(r, c));
      }
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

ParamTree load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCheckpointHeader) {
    throw InputError("checkpoint " + path.string() + ": missing or unsupported version header");
  }
  ParamTree tree;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw InputError("checkpoint " + path.string() + ": malformed entry line");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::string token;
        if (!(fields >> token)) {
          throw InputError("checkpoint " + path.string() + ": entry '" + name + "' is truncated");
        }
        m(r, c) = std::stod(token);
      }
    }
    std::string extra;
    if (fields >> extra) {
      throw InputError("checkpoint " + path.string() + ": entry '" + name + "' has trailing values");
    }
    tree.add(name, std::move(m));
  }
  return tree;
}

}  // namespace brdro
