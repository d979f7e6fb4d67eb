#include "vqr/lang.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "vqr/errors.hpp"

namespace vqr::lang {

using world::Color;
using world::Material;
using world::ObjShape;
using world::SceneGraph;
using world::SceneObject;
using world::SizeClass;

namespace {

// spatial questions are only asked about pairs separated by at least this
// much on the asked axis (normalized coordinates); keeps relations crisp
constexpr double kAxisMargin = 0.10;

const std::array<std::string, 4> kAttrNames{"shape", "color", "size", "material"};
const std::array<std::string, 4> kDirectionNames{"left", "right", "above", "below"};

double ncx(const SceneObject& o, const SceneGraph& s) { return o.bbox.cx() / s.width; }
double ncy(const SceneObject& o, const SceneGraph& s) { return o.bbox.cy() / s.height; }

bool horizontal(Direction d) { return d == Direction::left || d == Direction::right; }

/// candidate stands on side d of the referent (strict, normalized centers)
bool on_side(const SceneObject& cand, const SceneObject& ref, Direction d, const SceneGraph& s) {
  switch (d) {
    case Direction::left: return ncx(cand, s) < ncx(ref, s);
    case Direction::right: return ncx(cand, s) > ncx(ref, s);
    case Direction::above: return ncy(cand, s) < ncy(ref, s);
    default: return ncy(cand, s) > ncy(ref, s);
  }
}

bool matches(const SceneObject& o, const ProgramNode& n) {
  if (n.shape && *n.shape != o.shape) return false;
  if (n.color && *n.color != o.color) return false;
  if (n.size && *n.size != o.size) return false;
  if (n.material && *n.material != o.material) return false;
  return true;
}

int constraint_count(const ProgramNode& n) {
  return (n.shape ? 1 : 0) + (n.color ? 1 : 0) + (n.size ? 1 : 0) + (n.material ? 1 : 0);
}

std::string attr_value_of(const SceneObject& o, AttrType a) {
  switch (a) {
    case AttrType::shape: return world::shape_name(o.shape);
    case AttrType::color: return world::color_name(o.color);
    case AttrType::size: return world::size_name(o.size);
    default: return world::material_name(o.material);
  }
}

std::vector<int> eval_set(const ProgramNode& n, const SceneGraph& scene) {
  switch (n.kind) {
    case NodeKind::select: {
      if (!n.children.empty()) throw ContractError("select takes no children");
      std::vector<int> out;
      for (const auto& o : scene.objects)
        if (matches(o, n)) out.push_back(o.id);
      return out;
    }
    case NodeKind::filter: {
      if (n.children.size() != 1) throw ContractError("filter takes exactly one child");
      if (constraint_count(n) != 1) throw ContractError("filter takes exactly one constraint");
      std::vector<int> out;
      for (int id : eval_set(n.children[0], scene))
        if (matches(scene.objects[static_cast<std::size_t>(id)], n)) out.push_back(id);
      return out;
    }
    case NodeKind::relate: {
      if (n.children.size() != 1) throw ContractError("relate takes exactly one child");
      if (!n.dir) throw ContractError("relate is missing its direction");
      const std::vector<int> ref = eval_set(n.children[0], scene);
      if (ref.size() != 1)
        throw AmbiguityError("relate: referent resolves to " + std::to_string(ref.size()) +
                             " objects, need exactly 1");
      const SceneObject& r = scene.objects[static_cast<std::size_t>(ref[0])];
      std::vector<int> out;
      for (const auto& o : scene.objects)
        if (o.id != r.id && on_side(o, r, *n.dir, scene)) out.push_back(o.id);
      return out;
    }
    default:
      throw ContractError("expected an object-set node");
  }
}

const SceneObject& sole(const std::vector<int>& set, const SceneGraph& scene, const char* what) {
  if (set.size() != 1)
    throw AmbiguityError(std::string(what) + ": set has " + std::to_string(set.size()) +
                         " objects, need exactly 1");
  return scene.objects[static_cast<std::size_t>(set[0])];
}

}  // namespace

const std::string& attr_name(AttrType a) { return kAttrNames[static_cast<std::size_t>(a)]; }

AttrType attr_from_name(const std::string& s) {
  for (std::size_t i = 0; i < kAttrNames.size(); ++i)
    if (kAttrNames[i] == s) return static_cast<AttrType>(i);
  throw ParameterError("unknown attribute type: '" + s + "'");
}

const std::string& direction_name(Direction d) {
  return kDirectionNames[static_cast<std::size_t>(d)];
}

Direction direction_from_name(const std::string& s) {
  for (std::size_t i = 0; i < kDirectionNames.size(); ++i)
    if (kDirectionNames[i] == s) return static_cast<Direction>(i);
  throw ParameterError("unknown direction: '" + s + "'");
}

const std::vector<std::string>& answer_vocab() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v{"yes", "no"};
    for (int i = 0; i < world::kNumColors; ++i) v.push_back(world::color_name(static_cast<Color>(i)));
    for (int i = 0; i < world::kNumShapes; ++i) v.push_back(world::shape_name(static_cast<ObjShape>(i)));
    for (int i = 0; i < world::kNumSizes; ++i) v.push_back(world::size_name(static_cast<SizeClass>(i)));
    for (int i = 0; i < world::kNumMaterials; ++i)
      v.push_back(world::material_name(static_cast<Material>(i)));
    for (int d = 0; d <= 8; ++d) v.push_back(std::to_string(d));
    return v;
  }();
  return vocab;
}

int answer_index(const std::string& label) {
  const auto& v = answer_vocab();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == label) return static_cast<int>(i);
  throw IndexError("answer label '" + label + "' not in the answer vocabulary");
}

const std::string& answer_vocab_fingerprint() {
  static const std::string fp = [] {
    std::string joined;
    for (const auto& s : answer_vocab()) {
      joined += s;
      joined += '|';
    }
    std::ostringstream os;
    os << std::hex << fnv1a64(joined);
    return os.str();
  }();
  return fp;
}

const std::vector<std::string>& question_vocab() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v{
        "what", "is",   "the",  "of",     "there", "a",    "does", "image",  "contain", "in",
        "do",   "and",  "have", "same",   "as",    "how",  "many", "objects", "are",     "object",
        "number", "left", "right", "above", "below", "shape", "color", "size", "material"};
    for (int i = 0; i < world::kNumShapes; ++i) v.push_back(world::shape_name(static_cast<ObjShape>(i)));
    for (int i = 0; i < world::kNumColors; ++i) v.push_back(world::color_name(static_cast<Color>(i)));
    for (int i = 0; i < world::kNumSizes; ++i) v.push_back(world::size_name(static_cast<SizeClass>(i)));
    for (int i = 0; i < world::kNumMaterials; ++i)
      v.push_back(world::material_name(static_cast<Material>(i)));
    return v;
  }();
  return vocab;
}

const std::vector<std::string>& program_vocab() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v{"(",     ")",      "select", "filter",    "relate", "exist",
                               "query", "compare", "count",  "shape=",    "color=", "size=",
                               "material=", "shape", "color", "size", "material",
                               "left",  "right",  "above",  "below"};
    for (int i = 0; i < world::kNumShapes; ++i) v.push_back(world::shape_name(static_cast<ObjShape>(i)));
    for (int i = 0; i < world::kNumColors; ++i) v.push_back(world::color_name(static_cast<Color>(i)));
    for (int i = 0; i < world::kNumSizes; ++i) v.push_back(world::size_name(static_cast<SizeClass>(i)));
    for (int i = 0; i < world::kNumMaterials; ++i)
      v.push_back(world::material_name(static_cast<Material>(i)));
    return v;
  }();
  return vocab;
}

namespace {

std::vector<int> ids_from_vocab(std::span<const std::string> tokens,
                                const std::vector<std::string>& vocab, const char* what) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto it = std::find(vocab.begin(), vocab.end(), t);
    if (it == vocab.end())
      throw IndexError(std::string(what) + " token '" + t + "' not in vocabulary");
    out.push_back(static_cast<int>(it - vocab.begin()));
  }
  return out;
}

}  // namespace

std::vector<int> question_token_ids(std::span<const std::string> tokens) {
  return ids_from_vocab(tokens, question_vocab(), "question");
}

std::vector<int> program_token_ids(const ProgramNode& program) {
  const auto tokens = serialize_program(program);
  return ids_from_vocab(tokens, program_vocab(), "program");
}

std::string execute_program(const ProgramNode& program, const SceneGraph& scene) {
  switch (program.kind) {
    case NodeKind::exist:
      if (program.children.size() != 1) throw ContractError("exist takes exactly one child");
      return eval_set(program.children[0], scene).empty() ? "no" : "yes";
    case NodeKind::count:
      if (program.children.size() != 1) throw ContractError("count takes exactly one child");
      return std::to_string(eval_set(program.children[0], scene).size());
    case NodeKind::query: {
      if (program.children.size() != 1 || !program.attr)
        throw ContractError("query takes an attribute type and one child");
      const SceneObject& o = sole(eval_set(program.children[0], scene), scene, "query");
      return attr_value_of(o, *program.attr);
    }
    case NodeKind::compare_attr: {
      if (program.children.size() != 2 || !program.attr)
        throw ContractError("compare takes an attribute type and two children");
      const SceneObject& a = sole(eval_set(program.children[0], scene), scene, "compare");
      const SceneObject& b = sole(eval_set(program.children[1], scene), scene, "compare");
      return attr_value_of(a, *program.attr) == attr_value_of(b, *program.attr) ? "yes" : "no";
    }
    default:
      throw ContractError("program root must be exist, query, compare, or count");
  }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

void serialize_into(const ProgramNode& n, std::vector<std::string>& out) {
  out.push_back("(");
  switch (n.kind) {
    case NodeKind::select:
      out.push_back("select");
      if (n.shape) {
        out.push_back("shape=");
        out.push_back(world::shape_name(*n.shape));
      }
      if (n.color) {
        out.push_back("color=");
        out.push_back(world::color_name(*n.color));
      }
      if (n.size) {
        out.push_back("size=");
        out.push_back(world::size_name(*n.size));
      }
      if (n.material) {
        out.push_back("material=");
        out.push_back(world::material_name(*n.material));
      }
      break;
    case NodeKind::filter: {
      out.push_back("filter");
      if (n.shape) {
        out.push_back("shape=");
        out.push_back(world::shape_name(*n.shape));
      } else if (n.color) {
        out.push_back("color=");
        out.push_back(world::color_name(*n.color));
      } else if (n.size) {
        out.push_back("size=");
        out.push_back(world::size_name(*n.size));
      } else if (n.material) {
        out.push_back("material=");
        out.push_back(world::material_name(*n.material));
      }
      serialize_into(n.children.at(0), out);
      break;
    }
    case NodeKind::relate:
      out.push_back("relate");
      out.push_back(direction_name(n.dir.value()));
      serialize_into(n.children.at(0), out);
      break;
    case NodeKind::exist:
      out.push_back("exist");
      serialize_into(n.children.at(0), out);
      break;
    case NodeKind::query:
      out.push_back("query");
      out.push_back(attr_name(n.attr.value()));
      serialize_into(n.children.at(0), out);
      break;
    case NodeKind::compare_attr:
      out.push_back("compare");
      out.push_back(attr_name(n.attr.value()));
      serialize_into(n.children.at(0), out);
      serialize_into(n.children.at(1), out);
      break;
    case NodeKind::count:
      out.push_back("count");
      serialize_into(n.children.at(0), out);
      break;
  }
  out.push_back(")");
}

class ProgramParser {
 public:
  explicit ProgramParser(std::span<const std::string> toks) : toks_(toks) {}

  ProgramNode parse_root() {
    ProgramNode n = parse_node();
    if (pos_ != toks_.size()) fail("trailing tokens after program");
    const bool root_ok = n.kind == NodeKind::exist || n.kind == NodeKind::query ||
                         n.kind == NodeKind::compare_attr || n.kind == NodeKind::count;
    if (!root_ok) fail("program root must be exist, query, compare, or count");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("program parse error at token " + std::to_string(pos_) + ": " + why);
  }

  const std::string& next(const char* expecting) {
    if (pos_ >= toks_.size()) fail(std::string("unexpected end, expecting ") + expecting);
    return toks_[pos_++];
  }

  const std::string& peek(const char* expecting) const {
    if (pos_ >= toks_.size())
      throw ParseError("program parse error at token " + std::to_string(pos_) +
                       ": unexpected end, expecting " + expecting);
    return toks_[pos_];
  }

  void expect(const std::string& tok) {
    if (next(tok.c_str()) != tok) {
      --pos_;
      fail("expected '" + tok + "', got '" + toks_[pos_] + "'");
    }
  }

  void parse_constraint(ProgramNode& n, const std::string& key) {
    try {
      if (key == "shape=") {
        if (n.shape) fail("duplicate shape= constraint");
        n.shape = world::shape_from_name(next("shape value"));
      } else if (key == "color=") {
        if (n.color) fail("duplicate color= constraint");
        n.color = world::color_from_name(next("color value"));
      } else if (key == "size=") {
        if (n.size) fail("duplicate size= constraint");
        n.size = world::size_from_name(next("size value"));
      } else {
        if (n.material) fail("duplicate material= constraint");
        n.material = world::material_from_name(next("material value"));
      }
    } catch (const ParameterError& e) {
      fail(e.what());
    }
  }

  ProgramNode parse_node() {
    expect("(");
    ProgramNode n;
    const std::string head = next("node head");
    if (head == "select") {
      n.kind = NodeKind::select;
      while (peek("constraint or )") != ")") {
        const std::string key = next("constraint key");
        if (key != "shape=" && key != "color=" && key != "size=" && key != "material=") {
          --pos_;
          fail("unknown select constraint '" + key + "'");
        }
        parse_constraint(n, key);
      }
    } else if (head == "filter") {
      n.kind = NodeKind::filter;
      const std::string key = next("constraint key");
      if (key != "shape=" && key != "color=" && key != "size=" && key != "material=") {
        --pos_;
        fail("filter needs one attribute constraint, got '" + key + "'");
      }
      parse_constraint(n, key);
      n.children.push_back(parse_node());
    } else if (head == "relate") {
      n.kind = NodeKind::relate;
      const std::string d = next("direction");
      try {
        n.dir = direction_from_name(d);
      } catch (const ParameterError& e) {
        fail(e.what());
      }
      n.children.push_back(parse_node());
    } else if (head == "exist") {
      n.kind = NodeKind::exist;
      n.children.push_back(parse_node());
    } else if (head == "query") {
      n.kind = NodeKind::query;
      const std::string a = peek("attribute type");
      if (a == ")") fail("query is missing its attribute type");
      try {
        n.attr = attr_from_name(next("attribute type"));
      } catch (const ParameterError& e) {
        fail(e.what());
      }
      n.children.push_back(parse_node());
    } else if (head == "compare") {
      n.kind = NodeKind::compare_attr;
      try {
        n.attr = attr_from_name(next("attribute type"));
      } catch (const ParameterError& e) {
        fail(e.what());
      }
      n.children.push_back(parse_node());
      n.children.push_back(parse_node());
    } else if (head == "count") {
      n.kind = NodeKind::count;
      n.children.push_back(parse_node());
    } else {
      --pos_;
      fail("unknown node head '" + head + "'");
    }
    expect(")");
    // set-producing children must bottom out in selects
    for (const auto& c : n.children) {
      const bool set_like = c.kind == NodeKind::select || c.kind == NodeKind::filter ||
                            c.kind == NodeKind::relate;
      if (!set_like) fail("child node must produce an object set");
    }
    return n;
  }

  std::span<const std::string> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::string> serialize_program(const ProgramNode& program) {
  std::vector<std::string> out;
  serialize_into(program, out);
  return out;
}

ProgramNode parse_program(std::span<const std::string> tokens) {
  return ProgramParser(tokens).parse_root();
}

int template_of(const ProgramNode& p) {
  switch (p.kind) {
    case NodeKind::query:
      return p.children.at(0).kind == NodeKind::relate ? 4 : 1;
    case NodeKind::exist:
      return p.children.at(0).kind == NodeKind::filter ? 3 : 2;
    case NodeKind::compare_attr:
      return 5;
    case NodeKind::count:
      return 6;
    default:
      throw ContractError("template_of: not a root program node");
  }
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------------------
// question generation
// ---------------------------------------------------------------------------

namespace {

ProgramNode make_select(std::optional<ObjShape> shape, std::optional<Color> color) {
  ProgramNode n;
  n.kind = NodeKind::select;
  n.shape = shape;
  n.color = color;
  return n;
}

std::vector<std::string> rel_phrase(Direction d) {
  switch (d) {
    case Direction::left: return {"left", "of"};
    case Direction::right: return {"right", "of"};
    case Direction::above: return {"above"};
    default: return {"below"};
  }
}

/// indexes of shapes occurring exactly once, with their object index
std::vector<std::pair<ObjShape, int>> unique_shapes(const SceneGraph& s) {
  std::vector<std::pair<ObjShape, int>> out;
  for (int si = 0; si < world::kNumShapes; ++si) {
    int count = 0, at = -1;
    for (const auto& o : s.objects)
      if (o.shape == static_cast<ObjShape>(si)) {
        ++count;
        at = o.id;
      }
    if (count == 1) out.emplace_back(static_cast<ObjShape>(si), at);
  }
  return out;
}

std::vector<std::pair<Color, int>> unique_colors(const SceneGraph& s) {
  std::vector<std::pair<Color, int>> out;
  for (int ci = 0; ci < world::kNumColors; ++ci) {
    int count = 0, at = -1;
    for (const auto& o : s.objects)
      if (o.color == static_cast<Color>(ci)) {
        ++count;
        at = o.id;
      }
    if (count == 1) out.emplace_back(static_cast<Color>(ci), at);
  }
  return out;
}

double axis_coord(const SceneObject& o, const SceneGraph& s, Direction d) {
  return horizontal(d) ? ncx(o, s) : ncy(o, s);
}

struct Draft {
  std::vector<std::string> question;
  ProgramNode program;
};

std::optional<Draft> draft_t1(const SceneGraph& scene, Rng& rng) {
  struct Cand {
    ProgramNode select;
    AttrType ask;
    std::vector<std::string> referent_tokens;
    bool shape_query;
  };
  std::vector<Cand> cands;
  for (const auto& [sh, idx] : unique_shapes(scene)) {
    (void)idx;
    for (AttrType ask : {AttrType::color, AttrType::size, AttrType::material})
      cands.push_back({make_select(sh, std::nullopt), ask, {world::shape_name(sh)}, false});
  }
  for (const auto& [co, idx] : unique_colors(scene)) {
    (void)idx;
    cands.push_back({make_select(std::nullopt, co), AttrType::shape,
                     {world::color_name(co), "object"}, true});
  }
  if (cands.empty()) return std::nullopt;
  const Cand& c = cands[rng.below(cands.size())];
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b) {
    d.question = {"what", "is", "the", attr_name(c.ask), "of", "the"};
  } else {
    d.question = {"what", attr_name(c.ask), "is", "the"};
  }
  d.question.insert(d.question.end(), c.referent_tokens.begin(), c.referent_tokens.end());
  d.program.kind = NodeKind::query;
  d.program.attr = c.ask;
  d.program.children.push_back(c.select);
  return d;
}

std::optional<Draft> draft_t2(const SceneGraph& scene, Rng& rng) {
  std::vector<std::pair<Color, ObjShape>> present, absent;
  for (int ci = 0; ci < world::kNumColors; ++ci)
    for (int si = 0; si < world::kNumShapes; ++si) {
      const auto co = static_cast<Color>(ci);
      const auto sh = static_cast<ObjShape>(si);
      const bool hit = std::any_of(scene.objects.begin(), scene.objects.end(),
                                   [&](const SceneObject& o) { return o.color == co && o.shape == sh; });
      (hit ? present : absent).emplace_back(co, sh);
    }
  const bool want_yes = rng.bernoulli(0.5);
  const auto& pool = want_yes ? (present.empty() ? absent : present)
                              : (absent.empty() ? present : absent);
  const auto [co, sh] = pool[rng.below(pool.size())];
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b)
    d.question = {"does", "the", "image", "contain", "a", world::color_name(co), world::shape_name(sh)};
  else
    d.question = {"is", "there", "a", world::color_name(co), world::shape_name(sh)};
  d.program.kind = NodeKind::exist;
  ProgramNode sel = make_select(sh, co);
  d.program.children.push_back(std::move(sel));
  return d;
}

std::optional<Draft> draft_t3(const SceneGraph& scene, Rng& rng) {
  const auto uniq = unique_shapes(scene);
  struct Cand {
    ObjShape a, b;
    Direction d;
  };
  std::vector<Cand> cands;
  for (const auto& [sa, ia] : uniq)
    for (const auto& [sb, ib] : uniq) {
      if (sa == sb) continue;
      const auto& oa = scene.objects[static_cast<std::size_t>(ia)];
      const auto& ob = scene.objects[static_cast<std::size_t>(ib)];
      for (int di = 0; di < 4; ++di) {
        const auto dir = static_cast<Direction>(di);
        if (std::abs(axis_coord(oa, scene, dir) - axis_coord(ob, scene, dir)) >= kAxisMargin)
          cands.push_back({sa, sb, dir});
      }
    }
  if (cands.empty()) return std::nullopt;
  const Cand& c = cands[rng.below(cands.size())];
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b) d.question = {"in", "the", "image"};
  d.question.insert(d.question.end(), {"is", "the", world::shape_name(c.a)});
  const auto rel = rel_phrase(c.d);
  d.question.insert(d.question.end(), rel.begin(), rel.end());
  d.question.insert(d.question.end(), {"the", world::shape_name(c.b)});

  ProgramNode relate;
  relate.kind = NodeKind::relate;
  relate.dir = c.d;
  relate.children.push_back(make_select(c.b, std::nullopt));
  ProgramNode filter;
  filter.kind = NodeKind::filter;
  filter.shape = c.a;
  filter.children.push_back(std::move(relate));
  d.program.kind = NodeKind::exist;
  d.program.children.push_back(std::move(filter));
  return d;
}

std::optional<Draft> draft_t4(const SceneGraph& scene, Rng& rng) {
  struct Cand {
    Color co;
    ObjShape sh;
    Direction d;
    AttrType ask;
  };
  std::vector<Cand> cands;
  for (int ci = 0; ci < world::kNumColors; ++ci)
    for (int si = 0; si < world::kNumShapes; ++si) {
      const auto co = static_cast<Color>(ci);
      const auto sh = static_cast<ObjShape>(si);
      int count = 0, at = -1;
      for (const auto& o : scene.objects)
        if (o.color == co && o.shape == sh) {
          ++count;
          at = o.id;
        }
      if (count != 1) continue;
      const auto& ref = scene.objects[static_cast<std::size_t>(at)];
      for (int di = 0; di < 4; ++di) {
        const auto dir = static_cast<Direction>(di);
        int on = 0;
        bool crisp = true;
        for (const auto& o : scene.objects) {
          if (o.id == ref.id) continue;
          if (std::abs(axis_coord(o, scene, dir) - axis_coord(ref, scene, dir)) < kAxisMargin) {
            crisp = false;
            break;
          }
          on += on_side(o, ref, dir, scene) ? 1 : 0;
        }
        if (!crisp || on != 1) continue;
        for (AttrType ask : {AttrType::shape, AttrType::color, AttrType::size, AttrType::material})
          cands.push_back({co, sh, dir, ask});
      }
    }
  if (cands.empty()) return std::nullopt;
  const Cand& c = cands[rng.below(cands.size())];
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b)
    d.question = {"what", "is", "the", attr_name(c.ask), "of", "the", "object"};
  else
    d.question = {"what", attr_name(c.ask), "is", "the", "object"};
  const auto rel = rel_phrase(c.d);
  d.question.insert(d.question.end(), rel.begin(), rel.end());
  d.question.insert(d.question.end(), {"the", world::color_name(c.co), world::shape_name(c.sh)});

  ProgramNode relate;
  relate.kind = NodeKind::relate;
  relate.dir = c.d;
  relate.children.push_back(make_select(c.sh, c.co));
  d.program.kind = NodeKind::query;
  d.program.attr = c.ask;
  d.program.children.push_back(std::move(relate));
  return d;
}

std::optional<Draft> draft_t5(const SceneGraph& scene, Rng& rng) {
  const auto uniq = unique_shapes(scene);
  struct Cand {
    ObjShape a, b;
    AttrType ask;
  };
  std::vector<Cand> yes, no;
  for (const auto& [sa, ia] : uniq)
    for (const auto& [sb, ib] : uniq) {
      if (sa == sb) continue;
      const auto& oa = scene.objects[static_cast<std::size_t>(ia)];
      const auto& ob = scene.objects[static_cast<std::size_t>(ib)];
      for (AttrType ask : {AttrType::color, AttrType::size, AttrType::material}) {
        const bool same = attr_value_of(oa, ask) == attr_value_of(ob, ask);
        (same ? yes : no).push_back({sa, sb, ask});
      }
    }
  if (yes.empty() && no.empty()) return std::nullopt;
  const bool want_yes = rng.bernoulli(0.5);
  const auto& pool = want_yes ? (yes.empty() ? no : yes) : (no.empty() ? yes : no);
  const Cand& c = pool[rng.below(pool.size())];
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b)
    d.question = {"is",  "the", attr_name(c.ask), "of",  "the", world::shape_name(c.a),
                  "the", "same", "as", "the", attr_name(c.ask), "of", "the", world::shape_name(c.b)};
  else
    d.question = {"do", "the", world::shape_name(c.a), "and", "the", world::shape_name(c.b),
                  "have", "the", "same", attr_name(c.ask)};
  d.program.kind = NodeKind::compare_attr;
  d.program.attr = c.ask;
  d.program.children.push_back(make_select(c.a, std::nullopt));
  d.program.children.push_back(make_select(c.b, std::nullopt));
  return d;
}

std::optional<Draft> draft_t6(const SceneGraph& scene, Rng& rng) {
  (void)scene;
  const auto co = static_cast<Color>(rng.below_int(world::kNumColors));
  const bool variant_b = rng.bernoulli(0.5);
  Draft d;
  if (variant_b)
    d.question = {"what", "number", "of", world::color_name(co), "objects", "are", "there"};
  else
    d.question = {"how", "many", world::color_name(co), "objects", "are", "there"};
  d.program.kind = NodeKind::count;
  d.program.children.push_back(make_select(std::nullopt, co));
  return d;
}

}  // namespace

std::optional<QAItem> gen_question(const SceneGraph& scene, int template_id, Rng& rng,
                                   std::string qid, std::string image_id) {
  if (template_id < 1 || template_id > kNumTemplates)
    throw ParameterError("gen_question: template id " + std::to_string(template_id) +
                         " outside [1, " + std::to_string(kNumTemplates) + "]");
  std::optional<Draft> d;
  switch (template_id) {
    case 1: d = draft_t1(scene, rng); break;
    case 2: d = draft_t2(scene, rng); break;
    case 3: d = draft_t3(scene, rng); break;
    case 4: d = draft_t4(scene, rng); break;
    case 5: d = draft_t5(scene, rng); break;
    default: d = draft_t6(scene, rng); break;
  }
  if (!d) return std::nullopt;
  QAItem item;
  item.qid = std::move(qid);
  item.image_id = image_id.empty() ? scene.image_id : std::move(image_id);
  item.question = std::move(d->question);
  item.program = std::move(d->program);
  item.answer = execute_program(item.program, scene);
  return item;
}

// ---------------------------------------------------------------------------
// translation
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad_question(std::span<const std::string> toks) {
  throw TranslationError("question outside the template language: '" + join_tokens(toks) + "'");
}

/// parse "left of" | "right of" | "above" | "below" at position i
std::optional<std::pair<Direction, std::size_t>> match_rel(std::span<const std::string> t,
                                                           std::size_t i) {
  if (i < t.size() && t[i] == "above") return {{Direction::above, i + 1}};
  if (i < t.size() && t[i] == "below") return {{Direction::below, i + 1}};
  if (i + 1 < t.size() && t[i + 1] == "of") {
    if (t[i] == "left") return {{Direction::left, i + 2}};
    if (t[i] == "right") return {{Direction::right, i + 2}};
  }
  return std::nullopt;
}

bool is_attr_word(const std::string& s) {
  return s == "shape" || s == "color" || s == "size" || s == "material";
}

ProgramNode translate_t1(std::span<const std::string> t, AttrType ask, std::size_t i) {
  // referent: "<shape>" or "<color> object"
  ProgramNode root;
  root.kind = NodeKind::query;
  root.attr = ask;
  if (i + 1 < t.size() && t[i + 1] == "object") {
    if (i + 2 != t.size()) bad_question(t);
    root.children.push_back(make_select(std::nullopt, world::color_from_name(t[i])));
  } else {
    if (i + 1 != t.size()) bad_question(t);
    root.children.push_back(make_select(world::shape_from_name(t[i]), std::nullopt));
  }
  return root;
}

ProgramNode translate_t4(std::span<const std::string> t, AttrType ask, std::size_t i) {
  // "<rel> the <color> <shape>"
  const auto rel = match_rel(t, i);
  if (!rel) bad_question(t);
  std::size_t j = rel->second;
  if (j + 3 != t.size() || t[j] != "the") bad_question(t);
  ProgramNode relate;
  relate.kind = NodeKind::relate;
  relate.dir = rel->first;
  relate.children.push_back(
      make_select(world::shape_from_name(t[j + 2]), world::color_from_name(t[j + 1])));
  ProgramNode root;
  root.kind = NodeKind::query;
  root.attr = ask;
  root.children.push_back(std::move(relate));
  return root;
}

ProgramNode translate_t3(std::span<const std::string> t) {
  // "is the <shapeA> <rel> the <shapeB>"
  if (t.size() < 6 || t[0] != "is" || t[1] != "the") bad_question(t);
  const auto rel = match_rel(t, 3);
  if (!rel) bad_question(t);
  std::size_t j = rel->second;
  if (j + 2 != t.size() || t[j] != "the") bad_question(t);
  ProgramNode relate;
  relate.kind = NodeKind::relate;
  relate.dir = rel->first;
  relate.children.push_back(make_select(world::shape_from_name(t[j + 1]), std::nullopt));
  ProgramNode filter;
  filter.kind = NodeKind::filter;
  filter.shape = world::shape_from_name(t[2]);
  filter.children.push_back(std::move(relate));
  ProgramNode root;
  root.kind = NodeKind::exist;
  root.children.push_back(std::move(filter));
  return root;
}

}  // namespace

ProgramNode translate_question(std::span<const std::string> t) {
  try {
    if (t.empty()) bad_question(t);
    if (t[0] == "how") {
      // "how many <color> objects are there"
      if (t.size() != 6 || t[1] != "many" || t[3] != "objects" || t[4] != "are" || t[5] != "there")
        bad_question(t);
      ProgramNode root;
      root.kind = NodeKind::count;
      root.children.push_back(make_select(std::nullopt, world::color_from_name(t[2])));
      return root;
    }
    if (t[0] == "what") {
      if (t.size() >= 2 && t[1] == "number") {
        // "what number of <color> objects are there"
        if (t.size() != 7 || t[2] != "of" || t[4] != "objects" || t[5] != "are" || t[6] != "there")
          bad_question(t);
        ProgramNode root;
        root.kind = NodeKind::count;
        root.children.push_back(make_select(std::nullopt, world::color_from_name(t[3])));
        return root;
      }
      if (t.size() >= 2 && t[1] == "is") {
        // "what is the <attr> of the ..."
        if (t.size() < 7 || t[2] != "the" || !is_attr_word(t[3]) || t[4] != "of" || t[5] != "the")
          bad_question(t);
        const AttrType ask = attr_from_name(t[3]);
        if (t[6] == "object" && t.size() > 8) return translate_t4(t, ask, 7);
        return translate_t1(t, ask, 6);
      }
      // "what <attr> is the ..."
      if (t.size() < 5 || !is_attr_word(t[1]) || t[2] != "is" || t[3] != "the") bad_question(t);
      const AttrType ask = attr_from_name(t[1]);
      if (t[4] == "object" && t.size() > 6) return translate_t4(t, ask, 5);
      return translate_t1(t, ask, 4);
    }
    if (t[0] == "does") {
      // "does the image contain a <color> <shape>"
      if (t.size() != 7 || t[1] != "the" || t[2] != "image" || t[3] != "contain" || t[4] != "a")
        bad_question(t);
      ProgramNode root;
      root.kind = NodeKind::exist;
      root.children.push_back(make_select(world::shape_from_name(t[6]), world::color_from_name(t[5])));
      return root;
    }
    if (t[0] == "in") {
      // "in the image is the ..."
      if (t.size() < 4 || t[1] != "the" || t[2] != "image") bad_question(t);
      return translate_t3(t.subspan(3));
    }
    if (t[0] == "do") {
      // "do the <shapeA> and the <shapeB> have the same <attr>"
      if (t.size() != 10 || t[1] != "the" || t[3] != "and" || t[4] != "the" || t[6] != "have" ||
          t[7] != "the" || t[8] != "same" || !is_attr_word(t[9]))
        bad_question(t);
      ProgramNode root;
      root.kind = NodeKind::compare_attr;
      root.attr = attr_from_name(t[9]);
      root.children.push_back(make_select(world::shape_from_name(t[2]), std::nullopt));
      root.children.push_back(make_select(world::shape_from_name(t[5]), std::nullopt));
      return root;
    }
    if (t[0] == "is") {
      if (t.size() >= 2 && t[1] == "there") {
        // "is there a <color> <shape>"
        if (t.size() != 5 || t[2] != "a") bad_question(t);
        ProgramNode root;
        root.kind = NodeKind::exist;
        root.children.push_back(
            make_select(world::shape_from_name(t[4]), world::color_from_name(t[3])));
        return root;
      }
      if (t.size() >= 3 && t[1] == "the" && is_attr_word(t[2])) {
        // "is the <attr> of the <shapeA> the same as the <attr> of the <shapeB>"
        if (t.size() != 14 || t[3] != "of" || t[4] != "the" || t[6] != "the" || t[7] != "same" ||
            t[8] != "as" || t[9] != "the" || t[10] != t[2] || t[11] != "of" || t[12] != "the")
          bad_question(t);
        ProgramNode root;
        root.kind = NodeKind::compare_attr;
        root.attr = attr_from_name(t[2]);
        root.children.push_back(make_select(world::shape_from_name(t[5]), std::nullopt));
        root.children.push_back(make_select(world::shape_from_name(t[13]), std::nullopt));
        return root;
      }
      return translate_t3(t);
    }
  } catch (const ParameterError&) {
    bad_question(t);
  }
  bad_question(t);
}

}  // namespace vqr::lang
