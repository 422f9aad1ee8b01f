#include "attnlab/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "attnlab/rng.hpp"

namespace attnlab {

int TaskSpec::token_id(const std::string& tok) const {
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == tok) return static_cast<int>(i);
  throw std::out_of_range("vocab: unknown token '" + tok + "'");
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {
      "parity",           "even_pairs",       "missing_duplicates",
      "cycle_navigation", "stack_manipulation", "modular_arithmetic",
      "solve_equation",   "listops"};
  return names;
}

TaskSpec task_spec(const std::string& name, std::size_t len) {
  TaskSpec spec;
  spec.name = name;
  spec.length = len;
  if (name == "parity" || name == "even_pairs") {
    spec.vocab = {"0", "1"};
    spec.num_classes = 2;
  } else if (name == "missing_duplicates") {
    spec.vocab = {"0", "1", "MASK"};
    spec.num_classes = 2;
  } else if (name == "cycle_navigation") {
    spec.vocab = {"STAY", "+1", "-1"};
    spec.num_classes = 5;
  } else if (name == "stack_manipulation") {
    spec.vocab = {"a",      "b",      "c",      "d",      "SEP", "PUSH_a",
                  "PUSH_b", "PUSH_c", "PUSH_d", "POP",    "NOOP"};
    spec.num_classes = 5;  // top of stack in {a, b, c, d} or empty
  } else if (name == "modular_arithmetic") {
    spec.vocab = {"0", "1", "2", "3", "4", "+", "-", "*", "(", ")"};
    spec.num_classes = 5;
  } else if (name == "solve_equation") {
    spec.vocab = {"0", "1", "2", "3", "4", "x", "+", "-", "*", "(", ")", "="};
    spec.num_classes = 5;
  } else if (name == "listops") {
    spec.vocab = {"[MIN", "[MAX", "[MED", "[SM", "]", "0", "1", "2", "3",
                  "4",    "5",    "6",    "7",   "8", "9", "PAD"};
    spec.num_classes = 10;
  } else {
    throw std::invalid_argument("unknown task: " + name);
  }
  return spec;
}

std::vector<TaskInstance> gen_parity(std::size_t n, std::size_t len,
                                     std::uint64_t seed) {
  if (len < 1) throw std::invalid_argument("parity: len must be >= 1");
  Rng rng(seed);
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    inst.tokens.resize(len);
    int ones = 0;
    for (auto& t : inst.tokens) {
      t = static_cast<int>(rng.next_below(2));
      ones += t;
    }
    inst.label = ones % 2;
  }
  return out;
}

std::vector<TaskInstance> gen_even_pairs(std::size_t n, std::size_t len,
                                         std::uint64_t seed) {
  if (len < 1) throw std::invalid_argument("even_pairs: len must be >= 1");
  Rng rng(seed);
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    inst.tokens.resize(len);
    for (auto& t : inst.tokens) t = static_cast<int>(rng.next_below(2));
    inst.label = inst.tokens.front() == inst.tokens.back() ? 1 : 0;
  }
  return out;
}

std::vector<TaskInstance> gen_missing_duplicates(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed) {
  if (len < 2 || len % 2 != 0)
    throw std::invalid_argument("missing_duplicates: len must be even >= 2");
  Rng rng(seed);
  const std::size_t half = len / 2;
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    inst.tokens.resize(len);
    for (std::size_t i = 0; i < half; ++i) {
      const int bit = static_cast<int>(rng.next_below(2));
      inst.tokens[i] = bit;
      inst.tokens[i + half] = bit;
    }
    const auto p = static_cast<std::size_t>(rng.next_below(len));
    inst.label = inst.tokens[p];
    inst.tokens[p] = 2;  // MASK
  }
  return out;
}

std::vector<TaskInstance> gen_cycle_navigation(std::size_t n, std::size_t len,
                                               std::uint64_t seed) {
  if (len < 1) throw std::invalid_argument("cycle_navigation: len >= 1");
  Rng rng(seed);
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    inst.tokens.resize(len);
    long pos = 0;
    for (auto& t : inst.tokens) {
      t = static_cast<int>(rng.next_below(3));
      if (t == 1) pos += 1;
      if (t == 2) pos -= 1;
    }
    inst.label = static_cast<int>(((pos % 5) + 5) % 5);
  }
  return out;
}

std::vector<TaskInstance> gen_stack_manipulation(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed) {
  if (len < 2) throw std::invalid_argument("stack_manipulation: len >= 2");
  Rng rng(seed);
  constexpr int kSep = 4, kPushBase = 5, kPop = 9, kNoop = 10;
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    inst.tokens.clear();
    const std::size_t m =
        static_cast<std::size_t>(rng.next_below(std::min<std::size_t>(11, len - 1)));
    std::vector<int> stack;
    for (std::size_t i = 0; i < m; ++i) {
      const int sym = static_cast<int>(rng.next_below(4));
      inst.tokens.push_back(sym);
      stack.push_back(sym);
    }
    inst.tokens.push_back(kSep);
    while (inst.tokens.size() < len) {
      const double u = rng.uniform();
      if (u < 0.45) {
        const int sym = static_cast<int>(rng.next_below(4));
        inst.tokens.push_back(kPushBase + sym);
        stack.push_back(sym);
      } else if (u < 0.9) {
        inst.tokens.push_back(kPop);
        if (!stack.empty()) stack.pop_back();
      } else {
        inst.tokens.push_back(kNoop);
      }
    }
    inst.label = stack.empty() ? 4 : stack.back();
  }
  return out;
}

namespace {

// Expression trees for the modular tasks. Generated strings parenthesize
// every nested binary operation, so the tree value and the precedence-aware
// oracle parse agree by construction.
struct ExprNode {
  enum Kind { kDigit, kVar, kWrap, kBinary, kSignedWrap } kind = kDigit;
  int digit = 0;
  char op = '+';   // binary op, or the sign of a signed wrap
  std::vector<ExprNode> kids;
};

int mod5(long v) { return static_cast<int>(((v % 5) + 5) % 5); }

int eval_tree(const ExprNode& e, int xval) {
  switch (e.kind) {
    case ExprNode::kDigit: return e.digit;
    case ExprNode::kVar: return xval;
    case ExprNode::kWrap: return eval_tree(e.kids[0], xval);
    case ExprNode::kSignedWrap: {
      const int v = eval_tree(e.kids[0], xval);
      return e.op == '-' ? mod5(-v) : v;
    }
    case ExprNode::kBinary: {
      const int a = eval_tree(e.kids[0], xval);
      const int b = eval_tree(e.kids[1], xval);
      if (e.op == '+') return mod5(a + b);
      if (e.op == '-') return mod5(a - b);
      return mod5(a * b);
    }
  }
  return 0;
}

// token ids shared by modular_arithmetic / solve_equation vocabularies:
// digits map to their value; operator ids are looked up by the caller.
struct ModularVocabIds {
  int plus, minus, times, lparen, rparen, var = -1, equals = -1;
};

void emit_tokens(const ExprNode& e, const ModularVocabIds& ids,
                 std::vector<int>& out) {
  switch (e.kind) {
    case ExprNode::kDigit: out.push_back(e.digit); break;
    case ExprNode::kVar: out.push_back(ids.var); break;
    case ExprNode::kWrap:
      out.push_back(ids.lparen);
      emit_tokens(e.kids[0], ids, out);
      out.push_back(ids.rparen);
      break;
    case ExprNode::kSignedWrap:
      out.push_back(e.op == '-' ? ids.minus : ids.plus);
      out.push_back(ids.lparen);
      emit_tokens(e.kids[0], ids, out);
      out.push_back(ids.rparen);
      break;
    case ExprNode::kBinary:
      emit_tokens(e.kids[0], ids, out);
      out.push_back(e.op == '+' ? ids.plus
                                : (e.op == '-' ? ids.minus : ids.times));
      emit_tokens(e.kids[1], ids, out);
      break;
  }
}

char random_op(Rng& rng) {
  const auto r = rng.next_below(3);
  return r == 0 ? '+' : (r == 1 ? '-' : '*');
}

ExprNode gen_atom(Rng& rng, std::size_t len);

// Root expression of exactly `len` tokens (len odd >= 1): either one atom or
// "atom op atom" with an odd split of the remaining budget.
ExprNode gen_root(Rng& rng, std::size_t len) {
  if (len % 2 == 0) throw std::logic_error("gen_root: even length");
  if (len == 1 || (len >= 3 && rng.uniform() < 0.25)) {
    return gen_atom(rng, len);
  }
  const std::size_t budget = len - 1;  // split across two odd atom lengths
  const std::size_t choices = budget / 2;
  const std::size_t a = 1 + 2 * rng.next_below(choices);
  ExprNode node;
  node.kind = ExprNode::kBinary;
  node.op = random_op(rng);
  node.kids.push_back(gen_atom(rng, a));
  node.kids.push_back(gen_atom(rng, budget - a));
  return node;
}

ExprNode gen_atom(Rng& rng, std::size_t len) {
  if (len == 1) {
    ExprNode node;
    node.kind = ExprNode::kDigit;
    node.digit = static_cast<int>(rng.next_below(5));
    return node;
  }
  ExprNode node;
  node.kind = ExprNode::kWrap;
  node.kids.push_back(gen_root(rng, len - 2));
  return node;
}

// Expression of exactly `len` tokens for any len >= 1 (even lengths get a
// signed parenthesized wrapper).
ExprNode gen_expr_exact(Rng& rng, std::size_t len) {
  if (len % 2 == 1) return gen_root(rng, len);
  if (len < 4)
    throw std::invalid_argument("modular expression: even length must be >= 4");
  ExprNode node;
  node.kind = ExprNode::kSignedWrap;
  node.op = rng.next_below(2) == 0 ? '+' : '-';
  node.kids.push_back(gen_root(rng, len - 3));
  return node;
}

void replace_random_digit_with_var(ExprNode& e, Rng& rng) {
  // reservoir-sample one digit leaf
  std::vector<ExprNode*> digits;
  std::vector<ExprNode*> work{&e};
  while (!work.empty()) {
    ExprNode* cur = work.back();
    work.pop_back();
    if (cur->kind == ExprNode::kDigit) digits.push_back(cur);
    for (auto& k : cur->kids) work.push_back(&k);
  }
  ExprNode* pick = digits[rng.next_below(digits.size())];
  pick->kind = ExprNode::kVar;
}

}  // namespace

std::vector<TaskInstance> gen_modular_arithmetic(std::size_t n,
                                                 std::size_t len,
                                                 std::uint64_t seed) {
  if (len < 1 || (len % 2 == 0 && len < 4))
    throw std::invalid_argument("modular_arithmetic: unreachable length");
  Rng rng(seed);
  const ModularVocabIds ids{5, 6, 7, 8, 9};
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    const ExprNode tree = gen_expr_exact(rng, len);
    inst.tokens.clear();
    emit_tokens(tree, ids, inst.tokens);
    inst.label = eval_tree(tree, 0);
  }
  return out;
}

std::vector<TaskInstance> gen_solve_equation(std::size_t n, std::size_t len,
                                             std::uint64_t seed) {
  // layout: <expr of len-2 tokens> = <target digit>
  if (len < 3) throw std::invalid_argument("solve_equation: len >= 3");
  const std::size_t expr_len = len - 2;
  if (expr_len % 2 == 0 && expr_len < 4)
    throw std::invalid_argument("solve_equation: unreachable length");
  Rng rng(seed);
  const ModularVocabIds ids{6, 7, 8, 9, 10, 5, 11};
  constexpr int kRetryCap = 1000;
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    bool done = false;
    for (int attempt = 0; attempt < kRetryCap && !done; ++attempt) {
      ExprNode tree = gen_expr_exact(rng, expr_len);
      replace_random_digit_with_var(tree, rng);
      const int x0 = static_cast<int>(rng.next_below(5));
      const int target = eval_tree(tree, x0);
      int solutions = 0;
      int solution = -1;
      for (int x = 0; x < 5; ++x) {
        if (eval_tree(tree, x) == target) {
          ++solutions;
          solution = x;
        }
      }
      if (solutions != 1) continue;
      inst.tokens.clear();
      emit_tokens(tree, ids, inst.tokens);
      inst.tokens.push_back(ids.equals);
      inst.tokens.push_back(target);
      inst.label = solution;
      done = true;
    }
    if (!done)
      throw std::runtime_error("solve_equation: retry cap exhausted");
  }
  return out;
}

namespace {

// ListOps tree with bounded depth and arity; node cost is 2 + sum(children).
struct ListOpsNode {
  int op = -1;  // -1: digit leaf
  int digit = 0;
  std::vector<ListOpsNode> kids;
};

constexpr std::size_t kListOpsMaxDepth = 10;

// Subtree sizes are 1 (digit) or >= 4 ("[OP d d ]"). An operator node of
// size n splits n - 2 across 2..5 children drawn from that same size set;
// extras spread multinomially so subtrees stay balanced and the depth bound
// holds for the target window. Returns exactly `budget` tokens or fails
// (nullopt) when the depth cap pins an unsplittable remainder.
bool gen_listops_exact(Rng& rng, std::size_t budget, std::size_t depth,
                       ListOpsNode& out) {
  if (budget == 1) {
    out.op = -1;
    out.digit = static_cast<int>(rng.next_below(10));
    return true;
  }
  if (budget < 4) return false;
  const std::size_t m = budget - 2;  // to split across children

  // feasible arities: a == m (all digit children) or m >= a + 3
  std::vector<std::size_t> arities;
  for (std::size_t a = 2; a <= 5; ++a)
    if (a == m || m >= a + 3) arities.push_back(a);
  if (arities.empty()) return false;
  const std::size_t a = arities[rng.next_below(arities.size())];

  std::size_t t;  // number of digit children
  if (a == m) {
    t = a;
  } else {
    const std::size_t t_min =
        m >= 4 * a ? 0 : (4 * a - m + 2) / 3;  // ceil((4a - m) / 3)
    const std::size_t t_max = a - 1;
    if (depth + 1 >= kListOpsMaxDepth) {
      // children may only be digits below the cap
      if (a != m) return false;
      t = a;
    } else {
      // bias toward few digit children so sizes stay balanced
      const std::size_t span = std::min<std::size_t>(t_max - t_min, 1);
      t = t_min + rng.next_below(span + 1);
    }
  }

  const std::size_t big = a - t;
  std::vector<std::size_t> parts(a, 1);
  if (big > 0) {
    for (std::size_t i = t; i < a; ++i) parts[i] = 4;
    for (std::size_t extra = m - t - 4 * big; extra > 0; --extra)
      parts[t + rng.next_below(big)] += 1;
  }
  // shuffle child order so digits are not always leading
  for (std::size_t i = a; i > 1; --i)
    std::swap(parts[i - 1], parts[rng.next_below(i)]);

  out.op = static_cast<int>(rng.next_below(4));
  out.kids.assign(a, ListOpsNode{});
  for (std::size_t i = 0; i < a; ++i)
    if (!gen_listops_exact(rng, parts[i], depth + 1, out.kids[i]))
      return false;
  return true;
}

int eval_listops_tree(const ListOpsNode& n) {
  if (n.op < 0) return n.digit;
  std::vector<int> vals;
  vals.reserve(n.kids.size());
  for (const auto& k : n.kids) vals.push_back(eval_listops_tree(k));
  switch (n.op) {
    case 0: return *std::min_element(vals.begin(), vals.end());
    case 1: return *std::max_element(vals.begin(), vals.end());
    case 2: {
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size();
      return m % 2 == 1 ? vals[m / 2]
                        : (vals[m / 2 - 1] + vals[m / 2]) / 2;
    }
    default: {
      long s = 0;
      for (int v : vals) s += v;
      return static_cast<int>(s % 10);
    }
  }
}

void emit_listops(const ListOpsNode& n, std::vector<int>& out) {
  if (n.op < 0) {
    out.push_back(5 + n.digit);
    return;
  }
  out.push_back(n.op);
  for (const auto& k : n.kids) emit_listops(k, out);
  out.push_back(4);  // "]"
}

}  // namespace

std::vector<TaskInstance> gen_listops(std::size_t n, std::size_t min_len,
                                      std::size_t max_len,
                                      std::uint64_t seed) {
  if (min_len < 8)
    throw std::invalid_argument("listops: min length must be >= 8");
  if (max_len < min_len)
    throw std::invalid_argument("listops: empty length range");
  Rng rng(seed);
  constexpr int kRetryCap = 1000;
  constexpr int kPad = 15;
  std::vector<TaskInstance> out(n);
  for (auto& inst : out) {
    bool done = false;
    for (int attempt = 0; attempt < kRetryCap && !done; ++attempt) {
      const std::size_t target =
          min_len + rng.next_below(max_len - min_len + 1);
      ListOpsNode tree;
      if (!gen_listops_exact(rng, target, 0, tree)) continue;
      inst.tokens.clear();
      emit_listops(tree, inst.tokens);
      if (inst.tokens.size() != target)
        throw std::logic_error("listops: size bookkeeping failed");
      inst.tokens.resize(max_len, kPad);
      inst.label = eval_listops_tree(tree);
      done = true;
    }
    if (!done) throw std::runtime_error("listops: infeasible length range");
  }
  return out;
}

// ---------------------------------------------------------------------------
// oracles: independent label recomputation from the token sequence

namespace {

int oracle_parity(const TaskInstance& inst) {
  int ones = 0;
  for (int t : inst.tokens) ones += t == 1;
  return ones % 2;
}

int oracle_even_pairs(const TaskInstance& inst) {
  // equivalently: the number of 01/10 transitions is even
  int transitions = 0;
  for (std::size_t i = 1; i < inst.tokens.size(); ++i)
    transitions += inst.tokens[i] != inst.tokens[i - 1];
  return transitions % 2 == 0 ? 1 : 0;
}

int oracle_missing_duplicates(const TaskInstance& inst) {
  const std::size_t len = inst.tokens.size();
  const std::size_t half = len / 2;
  for (std::size_t i = 0; i < len; ++i) {
    if (inst.tokens[i] == 2)
      return inst.tokens[i < half ? i + half : i - half];
  }
  throw std::invalid_argument("missing_duplicates: no MASK token");
}

int oracle_cycle(const TaskInstance& inst) {
  long pos = 0;
  for (int t : inst.tokens) {
    if (t == 1) pos += 1;
    if (t == 2) pos -= 1;
  }
  return static_cast<int>(((pos % 5) + 5) % 5);
}

int oracle_stack(const TaskInstance& inst) {
  std::vector<int> stack;
  std::size_t i = 0;
  while (i < inst.tokens.size() && inst.tokens[i] != 4)
    stack.push_back(inst.tokens[i++]);
  if (i == inst.tokens.size())
    throw std::invalid_argument("stack_manipulation: no SEP token");
  for (++i; i < inst.tokens.size(); ++i) {
    const int t = inst.tokens[i];
    if (t >= 5 && t <= 8) stack.push_back(t - 5);
    else if (t == 9 && !stack.empty()) stack.pop_back();
  }
  return stack.empty() ? 4 : stack.back();
}

// Recursive-descent parser for the modular expressions, with standard
// precedence (unary sign, then *, then +/-) evaluated over Z5.
struct ModularParser {
  const std::vector<int>& toks;
  const ModularVocabIds ids;
  int xval;
  std::size_t pos = 0;

  int peek() const {
    return pos < toks.size() ? toks[pos] : -1;
  }
  int take() { return toks[pos++]; }

  int parse_expr() {
    int v = parse_term();
    while (peek() == ids.plus || peek() == ids.minus) {
      const int op = take();
      const int rhs = parse_term();
      v = op == ids.plus ? mod5(v + rhs) : mod5(v - rhs);
    }
    return v;
  }
  int parse_term() {
    int v = parse_factor();
    while (peek() == ids.times) {
      take();
      v = mod5(v * parse_factor());
    }
    return v;
  }
  int parse_factor() {
    const int t = peek();
    if (t == ids.plus || t == ids.minus) {
      take();
      const int v = parse_factor();
      return t == ids.minus ? mod5(-v) : v;
    }
    if (t == ids.lparen) {
      take();
      const int v = parse_expr();
      if (take() != ids.rparen)
        throw std::invalid_argument("modular parse: missing ')'");
      return v;
    }
    if (t == ids.var) {
      take();
      return xval;
    }
    if (t >= 0 && t <= 4) return take();
    throw std::invalid_argument("modular parse: unexpected token");
  }
};

int oracle_modular(const TaskInstance& inst) {
  ModularParser p{inst.tokens, ModularVocabIds{5, 6, 7, 8, 9}, 0};
  const int v = p.parse_expr();
  if (p.pos != inst.tokens.size())
    throw std::invalid_argument("modular parse: trailing tokens");
  return v;
}

int oracle_solve_equation(const TaskInstance& inst) {
  const ModularVocabIds ids{6, 7, 8, 9, 10, 5, 11};
  const auto eq = std::find(inst.tokens.begin(), inst.tokens.end(), ids.equals);
  if (eq == inst.tokens.end() || eq + 1 == inst.tokens.end())
    throw std::invalid_argument("solve_equation: malformed equation");
  const std::vector<int> lhs(inst.tokens.begin(), eq);
  const int target = *(eq + 1);
  int solution = -1;
  int count = 0;
  for (int x = 0; x < 5; ++x) {
    ModularParser p{lhs, ids, x};
    if (p.parse_expr() == target && p.pos == lhs.size()) {
      ++count;
      solution = x;
    }
  }
  if (count != 1)
    throw std::invalid_argument("solve_equation: solution not unique");
  return solution;
}

struct ListOpsParser {
  const std::vector<int>& toks;
  std::size_t pos = 0;

  int parse() {
    const int t = toks[pos++];
    if (t >= 5 && t <= 14) return t - 5;
    if (t < 0 || t > 3)
      throw std::invalid_argument("listops parse: unexpected token");
    std::vector<int> vals;
    while (pos < toks.size() && toks[pos] != 4) vals.push_back(parse());
    if (pos == toks.size())
      throw std::invalid_argument("listops parse: missing ']'");
    ++pos;  // consume "]"
    if (vals.size() < 1)
      throw std::invalid_argument("listops parse: empty operator");
    switch (t) {
      case 0: return *std::min_element(vals.begin(), vals.end());
      case 1: return *std::max_element(vals.begin(), vals.end());
      case 2: {
        std::sort(vals.begin(), vals.end());
        const std::size_t m = vals.size();
        return m % 2 == 1 ? vals[m / 2]
                          : (vals[m / 2 - 1] + vals[m / 2]) / 2;
      }
      default: {
        long s = 0;
        for (int v : vals) s += v;
        return static_cast<int>(s % 10);
      }
    }
  }
};

int oracle_listops(const TaskInstance& inst) {
  ListOpsParser p{inst.tokens};
  const int v = p.parse();
  for (std::size_t i = p.pos; i < inst.tokens.size(); ++i)
    if (inst.tokens[i] != 15)
      throw std::invalid_argument("listops parse: trailing tokens");
  return v;
}

}  // namespace

int task_oracle(const TaskSpec& spec, const TaskInstance& inst) {
  if (spec.name == "parity") return oracle_parity(inst);
  if (spec.name == "even_pairs") return oracle_even_pairs(inst);
  if (spec.name == "missing_duplicates") return oracle_missing_duplicates(inst);
  if (spec.name == "cycle_navigation") return oracle_cycle(inst);
  if (spec.name == "stack_manipulation") return oracle_stack(inst);
  if (spec.name == "modular_arithmetic") return oracle_modular(inst);
  if (spec.name == "solve_equation") return oracle_solve_equation(inst);
  if (spec.name == "listops") return oracle_listops(inst);
  throw std::invalid_argument("unknown task: " + spec.name);
}

Dataset make_dataset(const std::string& name, std::size_t len,
                     std::size_t train_n, std::size_t holdout_n,
                     std::uint64_t seed, std::size_t listops_min_len) {
  Dataset ds;
  ds.spec = task_spec(name, len);
  const auto train_seed = derive_seed(seed, 1);
  const auto holdout_seed = derive_seed(seed, 2);
  auto gen = [&](std::size_t n, std::uint64_t s) {
    if (name == "parity") return gen_parity(n, len, s);
    if (name == "even_pairs") return gen_even_pairs(n, len, s);
    if (name == "missing_duplicates") return gen_missing_duplicates(n, len, s);
    if (name == "cycle_navigation") return gen_cycle_navigation(n, len, s);
    if (name == "stack_manipulation") return gen_stack_manipulation(n, len, s);
    if (name == "modular_arithmetic") return gen_modular_arithmetic(n, len, s);
    if (name == "solve_equation") return gen_solve_equation(n, len, s);
    if (name == "listops") {
      const std::size_t lo = listops_min_len > 0 ? listops_min_len
                                                 : std::max<std::size_t>(8, len * 5 / 6);
      return gen_listops(n, lo, len, s);
    }
    throw std::invalid_argument("unknown task: " + name);
  };
  ds.train = gen(train_n, train_seed);
  ds.holdout = gen(holdout_n, holdout_seed);
  return ds;
}

namespace {

void save_instances(const std::vector<TaskInstance>& insts,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& inst : insts) {
    out << inst.label << '\t';
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << inst.tokens[i];
    }
    out << '\n';
  }
}

std::vector<TaskInstance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TaskInstance inst;
    std::istringstream ss(line);
    ss >> inst.label;
    int tok;
    while (ss >> tok) inst.tokens.push_back(tok);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  save_instances(ds.train, dir + "/" + ds.spec.name + "_train.tsv");
  save_instances(ds.holdout, dir + "/" + ds.spec.name + "_holdout.tsv");
  std::ofstream vf(dir + "/" + ds.spec.name + "_vocab.tsv");
  if (!vf) throw std::runtime_error("cannot write vocab file");
  for (std::size_t i = 0; i < ds.spec.vocab.size(); ++i)
    vf << ds.spec.vocab[i] << '\t' << i << '\n';
}

Dataset load_dataset(const std::string& name, const std::string& dir) {
  Dataset ds;
  ds.train = load_instances(dir + "/" + name + "_train.tsv");
  ds.holdout = load_instances(dir + "/" + name + "_holdout.tsv");
  const std::size_t len =
      ds.train.empty() ? 0 : ds.train.front().tokens.size();
  ds.spec = task_spec(name, len);
  return ds;
}

}  // namespace attnlab
