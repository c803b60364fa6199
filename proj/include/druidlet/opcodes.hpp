#pragma once

#include <cstdint>

namespace druidlet {

// Bytecode encoding. Operands are embedded in the opcode where the range
// allows; longJump and send carry explicit operand bytes.
enum Opcode : uint8_t {
  kOpPushReceiverVariable = 0x00,  // 0x00-0x0F, field = op & 0xF
  kOpPushTemp = 0x10,              // 0x10-0x1F, temp = op & 0xF
  kOpPushLiteral = 0x20,           // 0x20-0x2F, literal = op & 0xF
  kOpPushNil = 0x30,
  kOpPushTrue = 0x31,
  kOpPushFalse = 0x32,
  kOpStoreAndPopTemp = 0x40,  // 0x40-0x4F
  kOpDup = 0x50,
  kOpPopTop = 0x51,
  kOpPrimAddSend = 0x60,
  kOpPrimSubSend = 0x61,
  kOpPrimMulSend = 0x62,
  kOpPrimEqSend = 0x63,
  kOpPrimLessSend = 0x64,
  kOpPrimIdenticalSend = 0x65,
  kOpShortJumpForward = 0x70,  // 0x70-0x77, offset = (op & 7) + 1
  kOpShortJumpTrue = 0x78,     // 0x78-0x7F
  kOpShortJumpFalse = 0x80,    // 0x80-0x87
  kOpLongJump = 0x88,          // s16 operand, big-endian, relative to pc after operands
  kOpSend = 0x90,              // operands: literal selector index, arg count
  kOpReturnTop = 0xA0,
  kOpReturnReceiver = 0xA1,
  kOpPushNewArray = 0xB0,  // operand byte: bit7 set = interpreter slow path
};

// Number of explicit operand bytes following an opcode.
inline int operandByteCount(uint8_t op) {
  if (op == kOpLongJump || op == kOpSend) return 2;
  if (op == kOpPushNewArray) return 1;
  return 0;
}

inline int instructionLength(uint8_t op) { return 1 + operandByteCount(op); }

}  // namespace druidlet
