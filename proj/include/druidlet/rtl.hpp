#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace druidlet {

// Two-address register transfer code executed by the compiled tier.
// Arithmetic destinations are also source operands; flags are set by
// arithmetic/compare/test instructions and consumed by the next conditional
// jump before any other flag-setting instruction.

enum class RtlOp : uint8_t {
  MoveRR,    // dst := src
  MoveCqR,   // dst := imm
  MoveMwR,   // dst := mem[base + imm]
  MoveRMw,   // mem[base + imm] := src
  AddRR,     // dst += src (flags)
  AddCqR,    // dst += imm (flags)
  SubRR,     // dst -= src (flags)
  SubCqR,    // dst -= imm (flags)
  MulRR,     // dst *= src (flags: overflow)
  AndRR,     // dst &= src (flags: zero)
  AndCqR,    // dst &= imm (flags: zero)
  LslCqR,    // dst <<= imm (flags: overflow on sign change)
  AsrCqR,    // dst >>= imm (arithmetic)
  TstCqR,    // flags from dst & imm
  CmpCqR,    // flags from dst - imm
  CmpRR,     // flags from dst - src
  JumpZero,
  JumpNonZero,
  JumpOverflow,
  JumpLess,
  JumpGreaterOrEqual,
  JumpAlways,
  Label,
  PushR,
  PushCq,
  PushMw,    // push mem[base + imm]
  PopR,
  CallTrampoline,  // aux = trampoline id, imm = staged operand (pc, size)
  SendSite,        // aux = site id, imm = selector, src = arg count
  RetR,            // return with the result in src
};

enum Reg : uint8_t {
  kRegReceiverResult = 0,
  kRegArg0,
  kRegArg1,
  kRegTemp,
  kRegClass,
  kRegSendNumArgs,
  kRegSP,
  kRegFP,
  kRegR0,  // R0-R7: allocatable general registers
  kRegR1, kRegR2, kRegR3, kRegR4, kRegR5, kRegR6, kRegR7,
  kRegCount,
  kNoReg = 0xFF,
};

enum Trampoline : int32_t {
  kTrampSendMiss = 0,          // inline-cache miss entry (handled by send sites)
  kTrampMustBeBoolean = 1,
  kTrampDeoptimize = 2,
  kTrampInterpretPrimitiveFallback = 3,
  kTrampAllocateArray = 4,
};

struct RtlInstr {
  RtlOp op = RtlOp::Label;
  uint8_t dst = kNoReg;
  uint8_t src = kNoReg;
  uint8_t base = kNoReg;
  int64_t imm = 0;
  int32_t label = -1;  // jump target / label id
  int32_t aux = -1;    // trampoline id or send-site id
};

const char* regName(uint8_t r);
const char* rtlOpName(RtlOp op);
const char* trampolineName(int32_t id);

bool rtlSetsFlags(RtlOp op);
bool rtlReadsFlags(RtlOp op);
bool rtlIsJump(RtlOp op);

std::string disassembleRtl(const std::vector<RtlInstr>& code);

// Static flag discipline: every conditional jump consumes flags produced by
// a preceding setter with only flag-neutral instructions in between.
std::vector<std::string> checkFlagDiscipline(const std::vector<RtlInstr>& code);

}  // namespace druidlet
