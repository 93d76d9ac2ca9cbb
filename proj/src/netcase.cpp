#include "caplf/netcase.hpp"

#include "caplf/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

namespace caplf {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Matrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

struct RawCase {
  std::optional<double> base_mva;
  std::map<std::string, Matrix> matrices;
};

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class CaseLexer {
 public:
  explicit CaseLexer(std::string_view text) {
    // Strip comments line by line; '%' never appears inside the supported
    // string literals.
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      auto pct = line.find('%');
      if (pct != std::string_view::npos) line = line.substr(0, pct);
      for (char c : line) {
        buf_.push_back(c);
        line_of_.push_back(line_no_);
      }
      buf_.push_back('\n');
      line_of_.push_back(line_no_);
      ++line_no_;
      start = end + 1;
    }
  }

  RawCase parse() {
    RawCase raw;
    while (true) {
      skip_space(true);
      if (done()) break;
      if (peek() == ';') {
        ++pos_;
        continue;
      }
      std::string word = ident();
      if (word.empty()) fail("unexpected character '" + std::string(1, peek()) + "'");
      if (word == "function") {
        skip_to_eol();
        continue;
      }
      if (word == "end" || word == "return") continue;
      if (word != "mpc") fail("unexpected statement '" + word + "'");
      expect('.');
      std::string field = ident();
      if (field.empty()) fail("expected field name after 'mpc.'");
      skip_space(false);
      expect('=');
      skip_space(true);
      int line = current_line();
      if (peek() == '[') {
        Matrix m = matrix();
        if (field == "bus" || field == "gen" || field == "branch") {
          if (raw.matrices.count(field)) fail_at(line, "duplicate section '" + field + "'");
          raw.matrices[field] = std::move(m);
        }
      } else if (peek() == '{') {
        skip_block('{', '}');
      } else if (peek() == '\'' || peek() == '"') {
        skip_string();
      } else {
        double v = number();
        if (field == "baseMVA") raw.base_mva = v;
      }
      skip_space(false);
      if (!done() && peek() == ';') ++pos_;
    }
    return raw;
  }

 private:
  bool done() const { return pos_ >= buf_.size(); }
  char peek() const { return buf_[pos_]; }
  int current_line() const { return done() ? line_no_ : line_of_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, current_line()); }
  [[noreturn]] void fail_at(int line, const std::string& msg) const { throw ParseError(msg, line); }

  void skip_space(bool newlines) {
    while (!done()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        ++pos_;
      } else if (c == '.' && pos_ + 2 < buf_.size() && buf_[pos_ + 1] == '.' && buf_[pos_ + 2] == '.') {
        skip_to_eol();  // line continuation
      } else {
        break;
      }
    }
  }

  void skip_to_eol() {
    while (!done() && peek() != '\n') ++pos_;
  }

  std::string ident() {
    std::string out;
    while (!done() && is_ident_char(peek())) out.push_back(buf_[pos_++]);
    return out;
  }

  void expect(char c) {
    if (done() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_string() {
    char q = buf_[pos_++];
    while (!done() && peek() != q && peek() != '\n') ++pos_;
    if (done() || peek() != q) fail("unterminated string");
    ++pos_;
  }

  void skip_block(char open, char close) {
    int line = current_line();
    int depth = 0;
    while (!done()) {
      char c = buf_[pos_++];
      if (c == open) ++depth;
      if (c == close && --depth == 0) return;
    }
    fail_at(line, std::string("unterminated '") + open + "' block");
  }

  double number() {
    std::size_t start = pos_;
    while (!done()) {
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' || c == 'e' ||
          c == 'E' || std::isalpha(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    std::string tok(buf_.data() + start, pos_ - start);
    if (tok.empty()) fail("expected a number");
    if (tok == "Inf" || tok == "inf") return HUGE_VAL;
    if (tok == "-Inf" || tok == "-inf") return -HUGE_VAL;
    double v = 0.0;
    const char* first = tok.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      pos_ = start;
      fail("invalid number '" + tok + "'");
    }
    return v;
  }

  Matrix matrix() {
    int open_line = current_line();
    ++pos_;  // '['
    Matrix m;
    std::vector<double> row;
    int row_line = 0;
    auto flush = [&] {
      if (!row.empty()) {
        m.rows.push_back(std::move(row));
        m.lines.push_back(row_line);
        row.clear();
      }
    };
    while (true) {
      skip_space(false);
      if (done()) fail_at(open_line, "unterminated matrix");
      char c = peek();
      if (c == ']') {
        ++pos_;
        flush();
        return m;
      }
      if (c == ';' || c == '\n') {
        ++pos_;
        flush();
        continue;
      }
      if (c == ',') {
        ++pos_;
        continue;
      }
      if (row.empty()) row_line = current_line();
      row.push_back(number());
    }
  }

  std::vector<char> buf_;
  std::vector<int> line_of_;
  std::size_t pos_ = 0;
  int line_no_ = 1;
};

const Matrix& require(const RawCase& raw, const std::string& name, std::size_t min_cols) {
  auto it = raw.matrices.find(name);
  if (it == raw.matrices.end()) throw ParseError("missing section '" + name + "'");
  const Matrix& m = it->second;
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    if (m.rows[r].size() < min_cols) {
      throw ParseError("section '" + name + "' needs at least " + std::to_string(min_cols) + " columns, row has " +
                           std::to_string(m.rows[r].size()),
                       m.lines[r]);
    }
  }
  return m;
}

int as_int(double v, int line, const char* what) {
  if (std::floor(v) != v) throw ParseError(std::string(what) + " must be an integer", line);
  return static_cast<int>(v);
}

/// Finds a decimal that maps back to `target` exactly through `decode`.
template <class Decode>
double encode_exact(double target, double guess, Decode decode) {
  if (decode(guess) == target) return guess;
  double up = guess, down = guess;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
    if (decode(up) == target) return up;
    if (decode(down) == target) return down;
  }
  return guess;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

int NetworkCase::bus_index(int id) const {
  for (int i = 0; i < n_buses(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw ValidationError("unknown bus id " + std::to_string(id));
}

Eigen::VectorXd NetworkCase::scheduled_pg() const {
  Eigen::VectorXd pg = Eigen::VectorXd::Zero(n_buses());
  for (const auto& g : generators) pg[g.bus] += g.Pg;
  return pg;
}

Eigen::VectorXd NetworkCase::scheduled_qg() const {
  Eigen::VectorXd qg = Eigen::VectorXd::Zero(n_buses());
  for (const auto& g : generators) qg[g.bus] += g.Qg;
  return qg;
}

Eigen::VectorXd NetworkCase::fixed_magnitudes() const {
  Eigen::VectorXd v(T.size());
  for (std::size_t k = 0; k < T.size(); ++k) {
    int bus = T[k];
    v[k] = buses[bus].Vm_init;
    for (const auto& g : generators) {
      if (g.bus == bus) {
        v[k] = g.Vset;
        break;
      }
    }
  }
  return v;
}

void NetworkCase::finalize() {
  const int n = n_buses();
  if (n == 0) throw ValidationError("case has no buses");
  if (!(base_mva > 0.0)) throw ValidationError("baseMVA must be positive");
  slack = -1;
  int n_slack = 0;
  for (int i = 0; i < n; ++i) {
    if (buses[i].type == BusType::Slack) {
      slack = i;
      ++n_slack;
    }
  }
  if (n_slack == 0) throw ValidationError("case has no slack (reference) bus");
  if (n_slack > 1) throw ValidationError("case has " + std::to_string(n_slack) + " slack buses; exactly one is required");
  for (const auto& br : branches) {
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) throw ValidationError("branch endpoint out of range");
    if (br.status && br.x == 0.0) {
      throw ValidationError("branch " + std::to_string(buses[br.from].id) + "-" + std::to_string(buses[br.to].id) +
                            " has zero reactance");
    }
  }
  for (const auto& g : generators) {
    if (g.bus < 0 || g.bus >= n) throw ValidationError("generator bus out of range");
  }
  S.clear();
  L.clear();
  T.clear();
  pos_s_.assign(n, -1);
  pos_l_.assign(n, -1);
  pos_t_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    const BusType t = buses[i].type;
    if (t != BusType::Slack) {
      pos_s_[i] = static_cast<int>(S.size());
      S.push_back(i);
    }
    if (t == BusType::PQ) {
      pos_l_[i] = static_cast<int>(L.size());
      L.push_back(i);
    } else {
      pos_t_[i] = static_cast<int>(T.size());
      T.push_back(i);
    }
  }
  for (const auto& w : wind_farms) {
    if (w.bus < 0 || w.bus >= n) throw ValidationError("wind farm bus out of range");
    if (w.bus == slack) throw ValidationError("wind farms cannot be attached to the slack bus");
  }
}

NetworkCase parse_case(std::string_view text, std::string name) {
  RawCase raw = CaseLexer(text).parse();
  if (!raw.base_mva) throw ParseError("missing section 'baseMVA'");
  const Matrix& bus = require(raw, "bus", 13);
  const Matrix& gen = require(raw, "gen", 10);
  const Matrix& branch = require(raw, "branch", 11);

  NetworkCase net;
  net.name = std::move(name);
  net.base_mva = *raw.base_mva;
  if (!(net.base_mva > 0.0)) throw ParseError("baseMVA must be positive");
  const double base = net.base_mva;

  std::map<int, int> index_of;
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    const int line = bus.lines[r];
    Bus b;
    b.id = as_int(row[0], line, "bus number");
    const int type = as_int(row[1], line, "bus type");
    switch (type) {
      case 1: b.type = BusType::PQ; break;
      case 2: b.type = BusType::PV; break;
      case 3: b.type = BusType::Slack; break;
      case 4: throw ParseError("isolated bus " + std::to_string(b.id) + " is not supported", line);
      default: throw ParseError("unknown bus type " + std::to_string(type), line);
    }
    b.Pd = row[2] / base;
    b.Qd = row[3] / base;
    b.Gs = row[4] / base;
    b.Bs = row[5] / base;
    b.Vm_init = row[7];
    b.Va_init = row[8] * kDegToRad;
    b.base_kv = row[9];
    if (!index_of.emplace(b.id, static_cast<int>(net.buses.size())).second) {
      throw ParseError("duplicate bus number " + std::to_string(b.id), line);
    }
    net.buses.push_back(b);
  }

  auto lookup = [&](double id, int line, const char* what) {
    const int key = as_int(id, line, what);
    auto it = index_of.find(key);
    if (it == index_of.end()) throw ParseError(std::string(what) + " references unknown bus " + std::to_string(key), line);
    return it->second;
  };

  std::vector<bool> has_gen(net.buses.size(), false);
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    const int line = gen.lines[r];
    if (row[7] <= 0.0) continue;  // out of service
    Generator g;
    g.bus = lookup(row[0], line, "generator");
    g.Pg = row[1] / base;
    g.Qg = row[2] / base;
    g.Vset = row[5];
    const double pmax = row[8];
    g.capacity = (pmax > 0.0 ? pmax : row[6]) / base;
    has_gen[g.bus] = true;
    net.generators.push_back(g);
  }
  // A PV bus without an online generator cannot hold its voltage.
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    if (net.buses[i].type == BusType::PV && !has_gen[i]) net.buses[i].type = BusType::PQ;
  }

  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    const int line = branch.lines[r];
    if (row[10] <= 0.0) continue;  // out of service
    Branch br;
    br.from = lookup(row[0], line, "branch");
    br.to = lookup(row[1], line, "branch");
    br.r = row[2];
    br.x = row[3];
    br.b_charging = row[4];
    br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];
    br.phase_shift = row[9] * kDegToRad;
    br.status = true;
    if (br.x == 0.0) throw ParseError("branch has zero reactance", line);
    net.branches.push_back(br);
  }

  net.finalize();
  return net;
}

NetworkCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open case file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_case(ss.str(), path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string write_case(const NetworkCase& net) {
  const double base = net.base_mva;
  auto mw = [base](double pu) { return encode_exact(pu, pu * base, [base](double v) { return v / base; }); };
  auto deg = [](double rad) { return encode_exact(rad, rad / kDegToRad, [](double v) { return v * kDegToRad; }); };

  std::ostringstream os;
  os << "function mpc = " << (net.name.empty() ? std::string("case") : net.name) << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << fmt(base) << ";\n\n";
  os << "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
  for (const auto& b : net.buses) {
    os << '\t' << b.id << '\t' << static_cast<int>(b.type) << '\t' << fmt(mw(b.Pd)) << '\t' << fmt(mw(b.Qd)) << '\t'
       << fmt(mw(b.Gs)) << '\t' << fmt(mw(b.Bs)) << "\t1\t" << fmt(b.Vm_init) << '\t' << fmt(deg(b.Va_init)) << '\t'
       << fmt(b.base_kv) << "\t1\t1.1\t0.9;\n";
  }
  os << "];\n\n";
  os << "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
  for (const auto& g : net.generators) {
    os << '\t' << net.buses[g.bus].id << '\t' << fmt(mw(g.Pg)) << '\t' << fmt(mw(g.Qg)) << "\t9999\t-9999\t"
       << fmt(g.Vset) << '\t' << fmt(g.capacity == 0.0 ? 0.0 : base) << "\t1\t" << fmt(mw(g.capacity)) << "\t0;\n";
  }
  os << "];\n\n";
  os << "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n";
  for (const auto& br : net.branches) {
    os << '\t' << net.buses[br.from].id << '\t' << net.buses[br.to].id << '\t' << fmt(br.r) << '\t' << fmt(br.x)
       << '\t' << fmt(br.b_charging) << "\t0\t0\t0\t" << fmt(br.tap_ratio == 1.0 ? 0.0 : br.tap_ratio) << '\t'
       << fmt(deg(br.phase_shift)) << '\t' << (br.status ? 1 : 0) << "\t-360\t360;\n";
  }
  os << "];\n";
  return os.str();
}

BranchAdmittance branch_admittance(const Branch& br) {
  using cd = std::complex<double>;
  const cd ys = 1.0 / cd(br.r, br.x);
  const cd bc(0.0, br.b_charging);
  const cd tap = std::polar(br.tap_ratio, br.phase_shift);
  BranchAdmittance a;
  a.tt = ys + bc / 2.0;
  a.ff = a.tt / (tap * std::conj(tap));
  a.ft = -ys / std::conj(tap);
  a.tf = -ys / tap;
  return a;
}

Admittance build_admittance(const NetworkCase& net) {
  using cd = std::complex<double>;
  const int n = net.n_buses();
  std::vector<Eigen::Triplet<cd>> ty;
  std::vector<Eigen::Triplet<double>> tb;
  ty.reserve(net.branches.size() * 4 + n);
  tb.reserve(net.branches.size() * 4);
  for (const auto& br : net.branches) {
    if (!br.status) continue;
    const BranchAdmittance a = branch_admittance(br);
    ty.emplace_back(br.from, br.from, a.ff);
    ty.emplace_back(br.from, br.to, a.ft);
    ty.emplace_back(br.to, br.from, a.tf);
    ty.emplace_back(br.to, br.to, a.tt);
    const double bs = (1.0 / cd(br.r, br.x)).imag() / br.tap_ratio;
    tb.emplace_back(br.from, br.from, bs);
    tb.emplace_back(br.to, br.to, bs);
    tb.emplace_back(br.from, br.to, -bs);
    tb.emplace_back(br.to, br.from, -bs);
  }
  for (int i = 0; i < n; ++i) {
    const auto& b = net.buses[i];
    if (b.Gs != 0.0 || b.Bs != 0.0) ty.emplace_back(i, i, cd(b.Gs, b.Bs));
  }
  Admittance adm;
  adm.Y.resize(n, n);
  adm.Y.setFromTriplets(ty.begin(), ty.end());
  adm.Y.makeCompressed();
  adm.G = adm.Y.real();
  adm.B = adm.Y.imag();
  adm.B_noshunt.resize(n, n);
  adm.B_noshunt.setFromTriplets(tb.begin(), tb.end());
  adm.B_noshunt.makeCompressed();
  return adm;
}

}  // namespace caplf
