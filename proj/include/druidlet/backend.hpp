#pragma once

#include <array>
#include <optional>

#include "druidlet/druid_ir.hpp"
#include "druidlet/frontend.hpp"
#include "druidlet/rtl.hpp"

namespace druidlet {

// ---- staging ----

enum class StageClass : uint8_t { Bottom, JitConst, Runtime };

struct StagingResult {
  std::vector<StageClass> classes;  // per IR value
  int phiDemotions = 0;             // staged phis demoted by runtime siblings
  int loopDemotions = 0;            // staged loop variables under runtime conditions
};

// Forward sparse analysis over use-def chains: operand bytes, the bytecode
// pc, special-object reads and lifted literal loads are JIT-compile-time
// constants; pure computations over them stay constant; everything touching
// run-time state is Runtime.
StagingResult stageAnalysis(const Ir& ir);

// ---- generator programs ----

// Staged variables hold either JIT-compile-time values or allocated machine
// register ids; the two spaces are disjoint and validated.
enum class GenVarKind : uint8_t { Staged, Register };

enum class StagedOp : uint8_t {
  Const, Copy, Add, Sub, Mul, BitAnd, Shl, Shr, Cmp,
  SourcePc, SourceByte1, SourceByte2, SourceNil, SourceTrue, SourceFalse,
  LoadMethodSlot,  // reads a slot of the method under compilation
  FrameTempOffset, // byte offset of a frame temporary for this method
};

enum class GenOpKind : uint8_t {
  StagedCompute,    // dst := sop(a, b)
  AllocateReg,      // dst := a free register, conflict-checked
  ReleaseReg,       // frees var a's register
  EmitRtl,          // instantiate one RTL template
  MaterializeStaged,// dst reg := value of staged var a (memoized per value)
  SsPushConstant,   // staged var a
  SsPushRegister,   // reg var a (ownership moves to the stack)
  SsPushBaseOffset, // base reg var a, staged byte offset var b
  SsValueToReg,     // dst reg var := stack entry at depth imm
  SsPop,            // imm entries
  SsFlush,
  AnnotateBytecode,
  MarshallSend,     // selector staged var a, arg count staged var b (or imm)
  EnsureReceiverReg,
  Deoptimize,
  EmitJumpToFixup,  // unconditional jump to the bytecode at staged pc var a
  Label,            // local label imm
  PrimFailJump,     // jump to the primitive's shared fail label
  PrimReturn,       // primitive success: value (var a / staged b) to result reg
  FrameReturn,      // method return: value to result reg, epilogue, ret
  StagedIf,         // staged cond var a; body/elseBody
  StagedLoop,       // condOps compute staged cond var a each iteration; body
  DeferredRegion,   // emit body at the end of this handler with saved state
  FailCompilation,  // reason in text
};

// RTL template operands reference generator variables.
enum class HoleKind : uint8_t { None, FixedReg, VarReg, Imm, ImmVar, LabelLocal, LabelVar };

struct RtlTemplate {
  RtlOp op = RtlOp::Label;
  HoleKind dstKind = HoleKind::None;
  HoleKind srcKind = HoleKind::None;
  HoleKind baseKind = HoleKind::None;
  HoleKind immKind = HoleKind::None;
  int dst = -1, src = -1, base = -1;  // register ids or var ids
  int64_t imm = 0;                    // constant or staged var id
  int label = -1;                     // local label id
  int32_t aux = -1;
};

struct GenOp {
  GenOpKind kind = GenOpKind::SsFlush;
  int dst = -1;
  int a = -1, b = -1;
  int64_t imm = 0;
  StagedOp sop = StagedOp::Const;
  IrCond cond = IrCond::Eq;
  RtlTemplate rtl;
  std::vector<GenOp> body;
  std::vector<GenOp> elseBody;
  std::string text;  // fail reason
};

struct GeneratorProgram {
  std::string name;
  uint8_t opcode = 0;
  int operandCount = 0;
  int varCount = 0;
  std::vector<GenVarKind> varKinds;
  std::vector<GenOp> ops;
  bool isPrimitive = false;
  int numArgs = 0;
  std::optional<uint32_t> installClassGuard;
};

struct FrontendEntry {
  int generatorIndex = -1;  // -1: interpreter fallback (unknown/untranslatable)
  std::string handlerName;
  int operandCount = 0;
  BranchKind branchKind = BranchKind::None;
  std::optional<int> stackDelta;
  bool isMapped = false;
  bool branch = false;
  bool isBranchTrue = false;
  bool isBranchFalse = false;
  bool hasSend = false;
  std::optional<int> needsFrameNever;
};

struct FrontendTable {
  std::string source;  // "generated" or "mirror"
  std::array<FrontendEntry, 256> entries;
  std::vector<GeneratorProgram> generators;
  std::map<int, int> primitiveGenerators;     // primitive id -> generator index
  std::vector<std::string> buildLog;          // per-handler diagnostics
  int stagedPhiDemotions = 0;
};

struct EmissionResult {
  std::optional<GeneratorProgram> program;
  std::vector<Diagnostic> diagnostics;
};

// Stages and lowers one optimized handler IR into a generator program.
EmissionResult emitGenerator(const Ir& ir, const TranslationResult& translation);

// Meta-compiles the whole instruction set: translate, optimize, stage, emit.
FrontendTable buildFrontendTable(const VMDefinition& vmdef);

// Structured validation used by tests and the acceptance suite.
std::vector<std::string> checkGeneratorInvariants(const GeneratorProgram& g,
                                                  const FrontendEntry& entry);

// Runs only the staged projection of a generator (no RTL emission); returns
// false if it fails to terminate within the step budget.
bool stagedProjectionTerminates(const GeneratorProgram& g, int64_t pc, uint8_t byte1,
                                uint8_t byte2);

std::string printGenerator(const GeneratorProgram& g);
std::string printFrontendTable(const FrontendTable& table);   // table.txt
std::string printFrontendListing(const FrontendTable& table); // frontend.txt

// Versioned binary encoding (magic "DRU1", little-endian, length-prefixed).
std::vector<uint8_t> serializeFrontendTable(const FrontendTable& table);
FrontendTable deserializeFrontendTable(const std::vector<uint8_t>& bytes);

}  // namespace druidlet
