#include "druidlet/handler_lang.hpp"
#include "druidlet/object_model.hpp"
#include "druidlet/opcodes.hpp"

namespace druidlet {

namespace {

// The toy instruction set. Each handler is one definition shared by the
// interpreter and the meta-compiler.
const char* kHandlerListing = R"(
(helper literal (params index)
  (return (stageable (fetchPointer (add index 5) (methodObj)))))

(helper slowSizeOf (params obj)
  (annotations druidExitPoint)
  (return (numSlots obj)))

(bytecode-handler pushReceiverVariable
  (let fieldIndex (bitAnd (currentBytecode) 15))
  (push (fetchPointer fieldIndex (receiver)))
  (fetchNextBytecode))

(bytecode-handler pushTemporaryVariable
  (let tempIndex (bitAnd (currentBytecode) 15))
  (push (tempAt tempIndex))
  (fetchNextBytecode))

(bytecode-handler pushLiteralConstant
  (annotations (needsFrameNever 1))
  (let litIndex (bitAnd (currentBytecode) 15))
  (push (literal litIndex))
  (fetchNextBytecode))

(bytecode-handler pushConstantNil
  (annotations (needsFrameNever 1))
  (push (nilObject))
  (fetchNextBytecode))

(bytecode-handler pushConstantTrue
  (annotations (needsFrameNever 1))
  (push (trueObject))
  (fetchNextBytecode))

(bytecode-handler pushConstantFalse
  (annotations (needsFrameNever 1))
  (push (falseObject))
  (fetchNextBytecode))

(bytecode-handler storeAndPopTemporaryVariable
  (let tempIndex (bitAnd (currentBytecode) 15))
  (tempAtPut tempIndex (stackTop))
  (pop 1)
  (fetchNextBytecode))

(bytecode-handler duplicateTop
  (annotations (needsFrameNever 1))
  (push (stackTop))
  (fetchNextBytecode))

(bytecode-handler popStackTop
  (annotations (needsFrameNever -1))
  (pop 1)
  (fetchNextBytecode))

(bytecode-handler bytecodePrimAdd
  (annotations isMapped hasSend)
  (druidIgnore
    (let rcvr (stackValue 1))
    (let arg (stackValue 0))
    (if (isIntegerObject (bitAnd rcvr arg))
      (then
        (let result (checkedAdd rcvr arg (onOverflow (sendSpecial 0 1))))
        (pop 2)
        (push result)
        (fetchNextBytecode))))
  (sendSpecial 0 1))

(bytecode-handler bytecodePrimSubtract
  (annotations isMapped hasSend)
  (druidIgnore
    (let rcvr (stackValue 1))
    (let arg (stackValue 0))
    (if (isIntegerObject (bitAnd rcvr arg))
      (then
        (let result (checkedSub rcvr arg (onOverflow (sendSpecial 1 1))))
        (pop 2)
        (push result)
        (fetchNextBytecode))))
  (sendSpecial 1 1))

(bytecode-handler bytecodePrimMultiply
  (annotations isMapped hasSend)
  (druidIgnore
    (let rcvr (stackValue 1))
    (let arg (stackValue 0))
    (if (isIntegerObject (bitAnd rcvr arg))
      (then
        (let result (checkedMul rcvr arg (onOverflow (sendSpecial 2 1))))
        (pop 2)
        (push result)
        (fetchNextBytecode))))
  (sendSpecial 2 1))

(bytecode-handler bytecodePrimEqual
  (annotations isMapped hasSend)
  (druidIgnore
    (let rcvr (stackValue 1))
    (let arg (stackValue 0))
    (if (isIntegerObject (bitAnd rcvr arg))
      (then (booleanCheat (eq rcvr arg)))))
  (sendSpecial 3 1))

(bytecode-handler bytecodePrimLessThan
  (annotations isMapped hasSend)
  (druidIgnore
    (let rcvr (stackValue 1))
    (let arg (stackValue 0))
    (if (isIntegerObject (bitAnd rcvr arg))
      (then (booleanCheat (lt rcvr arg)))))
  (sendSpecial 4 1))

(bytecode-handler bytecodePrimIdentical
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (booleanCheat (eq rcvr arg)))

(bytecode-handler shortUnconditionalJump
  (annotations branch)
  (jump (add (bitAnd (currentBytecode) 7) 1)))

(bytecode-handler shortConditionalJumpTrue
  (annotations isMapped branch isBranchTrue)
  (let offset (add (bitAnd (currentBytecode) 7) 1))
  (let boolean (stackTop))
  (pop 1)
  (if (eq boolean (trueObject))
    (then (jump offset))
    (else
      (if (ne boolean (falseObject))
        (then (mustBeBoolean boolean)))
      (fetchNextBytecode))))

(bytecode-handler shortConditionalJumpFalse
  (annotations isMapped branch isBranchFalse)
  (let offset (add (bitAnd (currentBytecode) 7) 1))
  (let boolean (stackTop))
  (pop 1)
  (if (eq boolean (falseObject))
    (then (jump offset))
    (else
      (if (ne boolean (trueObject))
        (then (mustBeBoolean boolean)))
      (fetchNextBytecode))))

(bytecode-handler longUnconditionalJump
  (annotations branch)
  (let hi (fetchByte))
  (let lo (fetchByte))
  (let raw (add (shl hi 8) lo))
  (if (ge raw 32768)
    (then (jump (sub raw 65536)))
    (else (jump raw))))

(bytecode-handler sendLiteralSelector
  (annotations isMapped hasSend)
  (let selectorIndex (fetchByte))
  (let argumentCount (fetchByte))
  (sendLiteral selectorIndex argumentCount))

(bytecode-handler returnTopFromMethod
  (commonReturn (stackTop)))

(bytecode-handler returnReceiver
  (commonReturn (receiver)))

(bytecode-handler pushNewArray
  (annotations isMapped)
  (let sizeByte (fetchByte))
  (interpreterIgnore (let capacityHint (bitAnd (byte1) 127)))
  (if (ne (bitAnd sizeByte 128) 0)
    (then (forceInterpretation)))
  (let size (bitAnd sizeByte 127))
  (let array (newArrayOf size))
  (toDo i 0 (sub size 1)
    (storePointer i array (nilObject)))
  (push array)
  (fetchNextBytecode))

(primitive-handler primitiveAdd
  (annotations (numberOfArguments 1) (customisedReceiverFor 0))
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (if (not (isIntegerObject rcvr)) (then (primitiveFail)))
  (if (not (isIntegerObject arg)) (then (primitiveFail)))
  (let result (checkedAdd rcvr arg (onOverflow (primitiveFail))))
  (popThenPush 2 result))

(primitive-handler primitiveSubtract
  (annotations (numberOfArguments 1) (customisedReceiverFor 0))
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (if (not (isIntegerObject rcvr)) (then (primitiveFail)))
  (if (not (isIntegerObject arg)) (then (primitiveFail)))
  (let result (checkedSub rcvr arg (onOverflow (primitiveFail))))
  (popThenPush 2 result))

(primitive-handler primitiveMultiply
  (annotations (numberOfArguments 1) (customisedReceiverFor 0))
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (if (not (isIntegerObject rcvr)) (then (primitiveFail)))
  (if (not (isIntegerObject arg)) (then (primitiveFail)))
  (let result (checkedMul rcvr arg (onOverflow (primitiveFail))))
  (popThenPush 2 result))

(primitive-handler primitiveLessThan
  (annotations (numberOfArguments 1) (customisedReceiverFor 0))
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (if (not (isIntegerObject rcvr)) (then (primitiveFail)))
  (if (not (isIntegerObject arg)) (then (primitiveFail)))
  (if (lt rcvr arg)
    (then (popThenPush 2 (trueObject)))
    (else (popThenPush 2 (falseObject)))))

(primitive-handler primitiveEquals
  (annotations (numberOfArguments 1) (customisedReceiverFor 0))
  (let rcvr (stackValue 1))
  (let arg (stackValue 0))
  (if (not (isIntegerObject rcvr)) (then (primitiveFail)))
  (if (not (isIntegerObject arg)) (then (primitiveFail)))
  (if (eq rcvr arg)
    (then (popThenPush 2 (trueObject)))
    (else (popThenPush 2 (falseObject)))))

(primitive-handler primitiveAt
  (annotations (numberOfArguments 1) (customisedReceiverFor 4))
  (let rcvr (stackValue 1))
  (let idx (stackValue 0))
  (if (not (isIntegerObject idx)) (then (primitiveFail)))
  (if (isIntegerObject rcvr) (then (primitiveFail)))
  (if (ne (classIndex rcvr) 4) (then (primitiveFail)))
  (let i (shr idx 1))
  (if (lt i 1) (then (primitiveFail)))
  (if (gt i (numSlots rcvr)) (then (primitiveFail)))
  (popThenPush 2 (fetchPointer (sub i 1) rcvr)))

(primitive-handler primitiveAtPut
  (annotations (numberOfArguments 2) (customisedReceiverFor 4))
  (let rcvr (stackValue 2))
  (let idx (stackValue 1))
  (let val (stackValue 0))
  (if (not (isIntegerObject idx)) (then (primitiveFail)))
  (if (isIntegerObject rcvr) (then (primitiveFail)))
  (if (ne (classIndex rcvr) 4) (then (primitiveFail)))
  (let i (shr idx 1))
  (if (lt i 1) (then (primitiveFail)))
  (if (gt i (numSlots rcvr)) (then (primitiveFail)))
  (storePointer (sub i 1) rcvr val)
  (popThenPush 3 val))

(primitive-handler primitiveSize
  (annotations (numberOfArguments 0))
  (let rcvr (stackValue 0))
  (if (isIntegerObject rcvr) (then (primitiveFail)))
  (if (eq (classIndex rcvr) 4)
    (then (popThenPush 1 (add (shl (numSlots rcvr) 1) 1)))
    (else (popThenPush 1 (add (shl (slowSizeOf rcvr) 1) 1)))))

(primitive-handler primitiveNewArray
  (annotations (numberOfArguments 1))
  (let size (stackValue 0))
  (if (not (isIntegerObject size)) (then (primitiveFail)))
  (let n (shr size 1))
  (if (lt n 0) (then (primitiveFail)))
  (let array (newArrayOf n))
  (toDo i 0 (sub n 1)
    (storePointer i array (nilObject)))
  (popThenPush 2 array))
)";

VMDefinition* buildDefinition() {
  auto* def = new VMDefinition();
  ParsedDefinition parsed = parseHandlerListing(kHandlerListing);
  for (auto& h : parsed.helpers) def->helpers[h->name] = std::move(h);

  std::map<std::string, int> primitiveIds = {
      {"primitiveAdd", 1},      {"primitiveSubtract", 2}, {"primitiveMultiply", 3},
      {"primitiveLessThan", 4}, {"primitiveAt", 5},       {"primitiveSize", 6},
      {"primitiveNewArray", 7}, {"primitiveAtPut", 8},    {"primitiveEquals", 9},
  };
  for (auto& h : parsed.handlers) {
    if (h->kind == HandlerKind::Bytecode) {
      def->bytecodeHandlers.push_back(std::move(h));
    } else {
      auto it = primitiveIds.find(h->name);
      if (it == primitiveIds.end())
        throw std::logic_error("primitive without an id: " + h->name);
      def->primitiveHandlers[it->second] = std::move(h);
    }
  }

  def->specialSelectors = {kSelectorAdd, kSelectorSub, kSelectorMul, kSelectorEq,
                           kSelectorLess};

  auto fill = [&](int lo, int hi, const std::string& name, std::optional<int> delta,
                  BranchKind branch = BranchKind::None, int specialIdx = -1) {
    const HandlerDef* h = def->bytecodeHandlerNamed(name);
    if (!h) throw std::logic_error("missing handler " + name);
    for (int op = lo; op <= hi; op++) {
      TableEntry& e = def->table[op];
      e.handlerName = name;
      e.handler = h;
      e.operandCount = operandByteCount(uint8_t(op));
      e.branchKind = branch;
      e.stackDelta = delta;
      e.specialSelectorIndex = specialIdx;
    }
  };

  fill(0x00, 0x0F, "pushReceiverVariable", 1);
  fill(0x10, 0x1F, "pushTemporaryVariable", 1);
  fill(0x20, 0x2F, "pushLiteralConstant", 1);
  fill(0x30, 0x30, "pushConstantNil", 1);
  fill(0x31, 0x31, "pushConstantTrue", 1);
  fill(0x32, 0x32, "pushConstantFalse", 1);
  fill(0x40, 0x4F, "storeAndPopTemporaryVariable", -1);
  fill(0x50, 0x50, "duplicateTop", 1);
  fill(0x51, 0x51, "popStackTop", -1);
  fill(0x60, 0x60, "bytecodePrimAdd", std::nullopt, BranchKind::None, 0);
  fill(0x61, 0x61, "bytecodePrimSubtract", std::nullopt, BranchKind::None, 1);
  fill(0x62, 0x62, "bytecodePrimMultiply", std::nullopt, BranchKind::None, 2);
  fill(0x63, 0x63, "bytecodePrimEqual", std::nullopt, BranchKind::None, 3);
  fill(0x64, 0x64, "bytecodePrimLessThan", std::nullopt, BranchKind::None, 4);
  fill(0x65, 0x65, "bytecodePrimIdentical", std::nullopt);
  fill(0x70, 0x77, "shortUnconditionalJump", 0, BranchKind::ShortForward);
  fill(0x78, 0x7F, "shortConditionalJumpTrue", -1, BranchKind::ShortTrue);
  fill(0x80, 0x87, "shortConditionalJumpFalse", -1, BranchKind::ShortFalse);
  fill(0x88, 0x88, "longUnconditionalJump", 0, BranchKind::Long16);
  fill(0x90, 0x90, "sendLiteralSelector", std::nullopt);
  fill(0xA0, 0xA0, "returnTopFromMethod", std::nullopt);
  fill(0xA1, 0xA1, "returnReceiver", std::nullopt);
  fill(0xB0, 0xB0, "pushNewArray", 1);

  std::vector<Diagnostic> diags = validateDefinition(*def);
  if (!diags.empty()) {
    std::string msg = "builtin VM definition is invalid:";
    for (auto& d : diags) msg += "\n  " + d.path + ": " + d.message;
    throw std::logic_error(msg);
  }
  return def;
}

}  // namespace

const VMDefinition& builtinVmDefinition() {
  static const VMDefinition* def = buildDefinition();
  return *def;
}

}  // namespace druidlet
