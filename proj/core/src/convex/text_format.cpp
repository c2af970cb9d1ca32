#include "ces/convex/text_format.hpp"

#include <cctype>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "ces/common/error.hpp"

namespace ces::convex {

namespace {

std::string encode_label(const std::string& label) {
  if (label.empty()) return "-";
  for (char ch : label) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      throw Error(ErrorCode::kInvalidArgument, "label '" + label + "' contains whitespace");
    }
  }
  if (label == "-") throw Error(ErrorCode::kInvalidArgument, "label '-' is reserved");
  return label;
}

std::string decode_label(const std::string& token) { return token == "-" ? "" : token; }

void write_expr(std::ostream& out, const LinearExpr& a) {
  out << ' ' << a.size();
  for (const auto& t : a) out << ' ' << t.var << ' ' << t.coef;
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformedDocument, "conic dump: " + what);
}

template <typename T>
T read(std::istream& in, const char* what) {
  T value;
  if (!(in >> value)) malformed(std::string("expected ") + what);
  return value;
}

LinearExpr read_expr(std::istream& in) {
  auto nnz = read<std::size_t>(in, "nonzero count");
  LinearExpr a;
  a.reserve(nnz);
  for (std::size_t k = 0; k < nnz; ++k) {
    auto var = read<std::size_t>(in, "variable index");
    auto coef = read<double>(in, "coefficient");
    a.push_back({var, coef});
  }
  return a;
}

}  // namespace

void dump(const ConicProblem& problem, std::ostream& out) {
  auto flags = out.flags();
  auto prec = out.precision();
  out << std::setprecision(17);
  out << "ces-conic 1\n";
  out << "vars " << problem.num_vars() << '\n';
  out << "const " << problem.objective().constant << '\n';
  const auto& lin = problem.objective().linear;
  for (std::size_t i = 0; i < lin.size(); ++i) {
    if (lin[i] != 0.0) out << "lin " << i << ' ' << lin[i] << '\n';
  }
  for (const auto& q : problem.objective().quad) {
    out << "quad " << q.row << ' ' << q.col << ' ' << q.value << '\n';
  }
  for (const auto& c : problem.equalities()) {
    out << "eq " << encode_label(c.label) << ' ' << c.b;
    write_expr(out, c.a);
    out << '\n';
  }
  for (const auto& c : problem.inequalities()) {
    out << "ineq " << encode_label(c.label) << ' ' << c.b;
    write_expr(out, c.a);
    out << '\n';
  }
  for (const auto& c : problem.cones()) {
    out << "cone " << encode_label(c.label) << ' ' << c.h << ' ';
    if (c.branch_flow_loss) {
      out << *c.branch_flow_loss;
    } else {
      out << '-';
    }
    out << ' ' << c.rows.size() << "\n  g";
    write_expr(out, c.g);
    out << '\n';
    for (std::size_t k = 0; k < c.rows.size(); ++k) {
      out << "  row " << c.d[k];
      write_expr(out, c.rows[k]);
      out << '\n';
    }
  }
  out << "end\n";
  out.flags(flags);
  out.precision(prec);
}

std::string dump_to_string(const ConicProblem& problem) {
  std::ostringstream out;
  dump(problem, out);
  return out.str();
}

ConicProblem load(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "ces-conic" || version != 1) {
    malformed("missing 'ces-conic 1' header");
  }
  if (read<std::string>(in, "'vars'") != "vars") malformed("expected 'vars'");
  ConicProblem problem(read<std::size_t>(in, "variable count"));
  std::string key;
  while (in >> key) {
    if (key == "end") return problem;
    if (key == "const") {
      problem.objective().constant = read<double>(in, "constant");
    } else if (key == "lin") {
      auto i = read<std::size_t>(in, "index");
      auto v = read<double>(in, "value");
      if (i >= problem.num_vars()) malformed("linear index out of range");
      problem.objective().linear[i] = v;
    } else if (key == "quad") {
      auto i = read<std::size_t>(in, "row");
      auto j = read<std::size_t>(in, "col");
      auto v = read<double>(in, "value");
      problem.objective().quad.push_back({i, j, v});
    } else if (key == "eq" || key == "ineq") {
      auto label = decode_label(read<std::string>(in, "label"));
      auto b = read<double>(in, "rhs");
      auto a = read_expr(in);
      if (key == "eq") {
        problem.add_equality(std::move(a), b, std::move(label));
      } else {
        problem.add_inequality(std::move(a), b, std::move(label));
      }
    } else if (key == "cone") {
      ConeConstraint c;
      c.label = decode_label(read<std::string>(in, "label"));
      c.h = read<double>(in, "h");
      auto loss = read<std::string>(in, "loss tag");
      if (loss != "-") {
        try {
          c.branch_flow_loss = std::stoul(loss);
        } catch (const std::exception&) {
          malformed("bad loss tag '" + loss + "'");
        }
      }
      auto rows = read<std::size_t>(in, "row count");
      if (read<std::string>(in, "'g'") != "g") malformed("expected 'g'");
      c.g = read_expr(in);
      for (std::size_t k = 0; k < rows; ++k) {
        if (read<std::string>(in, "'row'") != "row") malformed("expected 'row'");
        c.d.push_back(read<double>(in, "d"));
        c.rows.push_back(read_expr(in));
      }
      problem.add_cone(std::move(c));
    } else {
      malformed("unknown record '" + key + "'");
    }
  }
  malformed("missing 'end'");
}

ConicProblem load_from_string(const std::string& text) {
  std::istringstream in(text);
  return load(in);
}

}  // namespace ces::convex
