#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "druidlet/handler_lang.hpp"

namespace druidlet {

// Three-address SSA control-flow graph produced by meta-interpreting one
// handler for one bytecode-table entry. Instruction index == SSA value id.

enum class IrOp {
  Constant,      // imm (known at meta-compile time)
  StageSource,   // stage: a value fixed at JIT compile time
  Copy,          // a
  StageHint,     // a: load lifted to JIT compile time
  Add, Sub, Mul, BitAnd, ShiftLeft, ShiftRight,  // a, b
  Compare,       // cond, a, b
  LoadReceiver,  // frame receiver (primitive convention: receiver register)
  LoadArg,       // imm = argument index (primitive convention)
  LoadSlot,      // a = object, b = slot index
  LoadNumSlots,  // a = object (header read, immutable)
  LoadClassId,   // a = object (header read, immutable)
  StoreSlot,     // a = object, b = slot index, c = value
  StackRead,     // imm = depth below top
  StackPush,     // a
  StackPop,      // imm = count
  LoadTemp,      // a = temp index
  StoreTemp,     // a = temp index, b = value
  Send,          // a = selector-id value, imm = arg count (pops args+rcvr, pushes result)
  RuntimeCall,   // imm = hook, a = optional argument
  Phi,           // one arg per predecessor
  // terminators
  Jump,            // succs[0]
  Branch,          // a = condition, succs[0] = true, succs[1] = false
  CheckedAdd, CheckedSub, CheckedMul,  // a, b; succs[0] = ok, succs[1] = overflow
  JumpToBytecode,  // a = target pc value
  Return,          // a = value (method return / primitive success)
  PrimFail,        // primitive failure fall-through
  DeoptPoint,      // leave compiled code, resume interpretation at this pc
  EndHandler,      // fall through to the next bytecode
};

enum class IrCond { Eq, Ne, Lt, Le, Gt, Ge, TestMaskNonZero };
enum class StageKind { BytecodePc, Byte1, Byte2, NilObject, TrueObject, FalseObject, Method };
enum class RuntimeHook { MustBeBoolean, AllocArray };

const char* irOpName(IrOp op);
const char* irCondName(IrCond c);
const char* stageKindName(StageKind k);
const char* runtimeHookName(RuntimeHook h);

bool irOpIsTerminator(IrOp op);
bool irOpIsPure(IrOp op);  // no side effects, freely removable when unused
bool irOpIsChecked(IrOp op);

struct IrInstr {
  IrOp op = IrOp::Constant;
  IrCond cond = IrCond::Eq;
  StageKind stage = StageKind::BytecodePc;
  RuntimeHook hook = RuntimeHook::MustBeBoolean;
  int64_t imm = 0;
  std::vector<int> args;
  int block = -1;
  bool dead = false;  // removed instructions stay as tombstones
};

struct IrBlock {
  std::vector<int> instrs;  // phis first, exactly one terminator last
  std::vector<int> preds;
  std::vector<int> succs;
  bool dead = false;
};

struct Ir {
  std::string name;          // handler name + entry
  HandlerKind kind = HandlerKind::Bytecode;
  AnnotationSet annotations;
  uint8_t opcode = 0;
  int operandCount = 0;
  int numArgs = 0;  // primitive register convention
  std::vector<IrInstr> instrs;
  std::vector<IrBlock> blocks;
  int entry = 0;

  int addBlock();
  int append(int block, IrInstr instr);
  const IrInstr& instr(int id) const { return instrs[size_t(id)]; }
  IrInstr& instr(int id) { return instrs[size_t(id)]; }
  int terminatorOf(int block) const;

  // use lists, recomputed on demand
  std::vector<std::vector<int>> computeUses() const;
  std::vector<int> reversePostorder() const;
  // immediate dominators indexed by block id (-1 for unreachable/entry)
  std::vector<int> dominators() const;
  bool dominates(const std::vector<int>& idom, int a, int b) const;

  int liveInstructionCount() const;
  int liveBlockCount() const;
};

// Structural SSA validity: single definition, uses dominated by defs, block
// and edge consistency, phi arity, exactly one terminator per live block.
std::vector<std::string> checkSsa(const Ir& ir);

std::string printIr(const Ir& ir);

}  // namespace druidlet
