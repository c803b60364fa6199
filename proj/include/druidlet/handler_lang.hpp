#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "druidlet/common.hpp"

namespace druidlet {

// The restricted language the VM's instruction handlers are written in.
// Handlers are data: the interpreter evaluates them directly and the
// meta-compiler translates them, so there is exactly one definition of each
// instruction's semantics.

enum class Intrinsic {
  // arithmetic / bit ops
  Add, Sub, Mul, BitAnd, ShiftLeft, ShiftRight,
  // comparisons (conditions only)
  CmpEq, CmpNe, CmpLt, CmpLe, CmpGt, CmpGe,
  // stack access
  StackTop, StackValue, Push, Pop, PopThenPush,
  // instruction stream
  FetchByte, FetchNextBytecode, JumpBy,
  // object memory
  IsIntegerObject, FetchPointer, StorePointer, NumSlots, ClassIndex, NewArrayOf,
  // frame access
  TempAt, TempAtPut, Receiver,
  // well-known objects
  NilObject, TrueObject, FalseObject,
  // control transfer out of the handler
  PrimitiveFail, SendSpecial, SendLiteral, MustBeBoolean, CommonReturn,
  BooleanCheat, ForceInterpretation,
  // intrinsic variables
  CurrentBytecode, BytecodePC, PrimFailCode, Byte1, Byte2, MethodObj,
};

enum class EffectClass { Pure, Stack, Memory, Control, Guiding, Send, RuntimeCall };

struct IntrinsicInfo {
  Intrinsic id;
  const char* name;
  int arity;
  EffectClass effect;
};

const IntrinsicInfo* intrinsicByName(const std::string& name);
const IntrinsicInfo& intrinsicInfo(Intrinsic id);

enum class ExprKind { IntConst, Var, Call, HelperCall, Checked, Stageable };
enum class CheckedKind { Add, Sub, Mul };

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;
struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  ExprKind kind;
  int64_t intValue = 0;                  // IntConst
  Intrinsic intrinsic = Intrinsic::Add;  // Call
  std::string name;                      // Var, HelperCall
  int varSlot = -1;                      // Var: resolved local slot
  std::vector<ExprPtr> args;
  CheckedKind checkedOp = CheckedKind::Add;
  std::vector<StmtPtr> onOverflow;  // Checked
  ExprPtr inner;                    // Stageable
};

enum class StmtKind {
  Let, Assign, If, While, CountedLoop, ExprStmt, Return,
  DruidIgnore, InterpreterIgnore,
};

// (not C) parses as a HelperCall with this sentinel name; it is legal only in
// condition position.
inline bool isNotCall(const Expr& e) {
  return e.kind == ExprKind::HelperCall && e.name == "not";
}

struct Stmt {
  StmtKind kind;
  std::string var;
  int varSlot = -1;
  ExprPtr expr;   // Let/Assign value; If/While condition; CountedLoop from; ExprStmt; Return (optional)
  ExprPtr expr2;  // CountedLoop to
  std::vector<StmtPtr> body;      // If then / While body / CountedLoop body / Ignore body
  std::vector<StmtPtr> elseBody;  // If else
};

struct AnnotationSet {
  std::optional<int> numberOfArguments;
  bool isMapped = false;
  bool branch = false;
  bool isBranchTrue = false;
  bool isBranchFalse = false;
  bool hasSend = false;
  std::optional<int> needsFrameNever;  // declared stack delta
  bool druidExitPoint = false;
  std::optional<uint32_t> customisedReceiverFor;
};

enum class HandlerKind { Bytecode, Primitive };

struct HandlerDef {
  std::string name;
  HandlerKind kind = HandlerKind::Bytecode;
  AnnotationSet annotations;
  std::vector<StmtPtr> body;
  std::vector<std::string> helpersUsed;
  int localCount = 0;  // resolved by validation
};

struct HelperDef {
  std::string name;
  std::vector<std::string> params;
  AnnotationSet annotations;  // druidExitPoint is the only meaningful flag
  std::vector<StmtPtr> body;
  int localCount = 0;
};

// How the compile driver decodes a branch's target without evaluating the
// handler.
enum class BranchKind { None, ShortForward, ShortTrue, ShortFalse, Long16 };

struct TableEntry {
  std::string handlerName;  // empty = unknown bytecode
  const HandlerDef* handler = nullptr;
  int operandCount = 0;
  BranchKind branchKind = BranchKind::None;
  std::optional<int> stackDelta;
  int specialSelectorIndex = -1;  // >= 0 for the special-selector send opcodes
};

struct VMDefinition {
  std::vector<std::unique_ptr<HandlerDef>> bytecodeHandlers;
  std::map<int, std::unique_ptr<HandlerDef>> primitiveHandlers;  // primitive id -> def
  std::map<std::string, std::unique_ptr<HelperDef>> helpers;
  std::array<TableEntry, 256> table;
  std::array<uint16_t, 5> specialSelectors;  // + - * = <

  const HandlerDef* bytecodeHandlerNamed(const std::string& name) const;
  const HandlerDef* primitiveById(int id) const;
};

// The fixed toy instruction set, parsed from its textual definition and
// validated. Immutable after construction.
const VMDefinition& builtinVmDefinition();

struct Diagnostic {
  std::string path;  // AST path, e.g. "body[2].then[0]"
  std::string message;
};

std::vector<Diagnostic> validateHandler(const HandlerDef& def,
                                        const std::map<std::string, std::unique_ptr<HelperDef>>& helpers);
std::vector<Diagnostic> validateDefinition(const VMDefinition& def);

// Readable listing of handlers and helpers; parses back to the same AST
// (print . parse . print is a fixpoint).
std::string printHandler(const HandlerDef& def);
std::string printHelper(const HelperDef& def);
std::string printDefinition(const VMDefinition& def);

struct ParsedDefinition {
  std::vector<std::unique_ptr<HandlerDef>> handlers;
  std::vector<std::unique_ptr<HelperDef>> helpers;
};
ParsedDefinition parseHandlerListing(const std::string& text);

}  // namespace druidlet
