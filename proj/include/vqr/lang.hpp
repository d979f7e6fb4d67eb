#pragma once

// The question/program language: six question templates over scene graphs,
// a deterministic pattern-matching translator from question tokens to
// programs, an S-expression program serializer, and the set-semantics
// executor that answers programs against a scene.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/rng.hpp"
#include "vqr/world.hpp"

namespace vqr::lang {

enum class NodeKind { select, filter, relate, exist, query, compare_attr, count };
enum class AttrType { shape, color, size, material };
enum class Direction { left, right, above, below };

const std::string& attr_name(AttrType a);
AttrType attr_from_name(const std::string& s);
const std::string& direction_name(Direction d);
Direction direction_from_name(const std::string& s);

/// Program tree node. select carries any subset of the four attribute
/// constraints; filter carries exactly one; query and compare_attr carry the
/// queried attribute type; relate carries a direction. Leaves are selects.
struct ProgramNode {
  NodeKind kind = NodeKind::select;
  std::optional<world::ObjShape> shape;
  std::optional<world::Color> color;
  std::optional<world::SizeClass> size;
  std::optional<world::Material> material;
  std::optional<AttrType> attr;
  std::optional<Direction> dir;
  std::vector<ProgramNode> children;

  bool operator==(const ProgramNode&) const = default;
};

struct QAItem {
  std::string qid;
  std::string image_id;
  std::vector<std::string> question;
  ProgramNode program;
  std::string answer;
};

// -- answer vocabulary -------------------------------------------------------

/// [yes, no, colors, shapes, sizes, materials, digits 0-8]; 24 classes.
const std::vector<std::string>& answer_vocab();
int answer_index(const std::string& label);
/// Hash binding score files and checkpoints to this class ordering.
const std::string& answer_vocab_fingerprint();

// -- token vocabularies for the encoders --------------------------------------

const std::vector<std::string>& question_vocab();
const std::vector<std::string>& program_vocab();
std::vector<int> question_token_ids(std::span<const std::string> tokens);
std::vector<int> program_token_ids(const ProgramNode& program);

// -- operations ----------------------------------------------------------------

inline constexpr int kNumTemplates = 6;

/// Instantiates the template on the scene with unique referents (and crisp
/// relation margins for the spatial templates). Returns nullopt when the
/// scene cannot host the template; the caller resamples.
std::optional<QAItem> gen_question(const world::SceneGraph& scene, int template_id, Rng& rng,
                                   std::string qid = "q", std::string image_id = {});

/// Deterministic inverse of the template surface forms; total on the
/// generator's language.
ProgramNode translate_question(std::span<const std::string> tokens);

/// Set-semantics evaluation; the answer oracle.
std::string execute_program(const ProgramNode& program, const world::SceneGraph& scene);

std::vector<std::string> serialize_program(const ProgramNode& program);
ProgramNode parse_program(std::span<const std::string> tokens);

/// Template id (1..6) recovered from program structure.
int template_of(const ProgramNode& program);

std::string join_tokens(std::span<const std::string> tokens);
std::vector<std::string> split_tokens(const std::string& text);

}  // namespace vqr::lang
