#include "doctest.h"
#include "druidlet/handler_lang.hpp"
#include "druidlet/object_model.hpp"
#include "druidlet/opcodes.hpp"

using namespace druidlet;

TEST_CASE("builtin definition validates cleanly") {
  const VMDefinition& def = builtinVmDefinition();
  auto diags = validateDefinition(def);
  for (auto& d : diags) MESSAGE(d.path, ": ", d.message);
  CHECK(diags.empty());
}

TEST_CASE("bytecode table is total and bit-exact") {
  const VMDefinition& def = builtinVmDefinition();
  // every opcode resolves to a handler or the unknown marker
  for (int op = 0; op < 256; op++) {
    const TableEntry& e = def.table[op];
    if (!e.handlerName.empty()) CHECK(e.handler != nullptr);
  }
  CHECK(def.table[0x00].handlerName == "pushReceiverVariable");
  CHECK(def.table[0x0F].handlerName == "pushReceiverVariable");
  CHECK(def.table[0x78].handlerName == "shortConditionalJumpTrue");
  CHECK(def.table[0x78].handler->annotations.isMapped);
  CHECK(def.table[0x78].handler->annotations.branch);
  CHECK(def.table[0x78].handler->annotations.isBranchTrue);
  CHECK(def.table[0x50].handlerName == "duplicateTop");
  CHECK(def.table[0x50].handler->annotations.needsFrameNever == 1);
  CHECK(def.table[0x50].stackDelta == 1);
  CHECK(def.table[0xFF].handlerName.empty());
  CHECK(def.table[kOpSend].operandCount == 2);
  CHECK(def.table[kOpPushNewArray].operandCount == 1);
}

TEST_CASE("builtin primitives carry their annotations") {
  const VMDefinition& def = builtinVmDefinition();
  const HandlerDef* add = def.primitiveById(1);
  REQUIRE(add != nullptr);
  CHECK(add->name == "primitiveAdd");
  CHECK(add->annotations.numberOfArguments == 1);
  CHECK(add->annotations.customisedReceiverFor == kClassSmallInteger);
  const HandlerDef* size = def.primitiveById(6);
  REQUIRE(size != nullptr);
  CHECK(size->annotations.numberOfArguments == 0);
  // the slow branch goes through the exit-point helper
  bool usesExitHelper = false;
  for (auto& h : size->helpersUsed) usesExitHelper |= (h == "slowSizeOf");
  CHECK(usesExitHelper);
  CHECK(def.helpers.at("slowSizeOf")->annotations.druidExitPoint);
}

TEST_CASE("pretty printer round-trips") {
  const VMDefinition& def = builtinVmDefinition();
  std::string once = printDefinition(def);
  ParsedDefinition reparsed = parseHandlerListing(once);
  std::string twice;
  // reprint in the same order the listing contains
  for (auto& h : reparsed.helpers) twice += printHelper(*h) + "\n";
  std::string handlerPart;
  for (auto& h : reparsed.handlers) handlerPart += printHandler(*h) + "\n";
  twice += handlerPart;
  CHECK(once == twice);
}

TEST_CASE("validation accepts a minimal handler") {
  ParsedDefinition p = parseHandlerListing(
      "(bytecode-handler dupTop (push (stackTop)) (fetchNextBytecode))");
  REQUIRE(p.handlers.size() == 1);
  auto diags = validateHandler(*p.handlers[0], builtinVmDefinition().helpers);
  CHECK(diags.empty());
}

TEST_CASE("validation reports a path missing its terminator") {
  ParsedDefinition p = parseHandlerListing(
      "(bytecode-handler broken"
      " (if (eq (stackTop) (trueObject))"
      "  (then (jump 1))"
      "  (else (pop 1))))");
  auto diags = validateHandler(*p.handlers[0], builtinVmDefinition().helpers);
  REQUIRE_FALSE(diags.empty());
  CHECK(diags[0].path.find("body") != std::string::npos);
}

TEST_CASE("validation flags misplaced annotations") {
  ParsedDefinition p = parseHandlerListing(
      "(primitive-handler bad (annotations (numberOfArguments 1) branch)"
      " (popThenPush 2 (stackValue 0)))");
  auto diags = validateHandler(*p.handlers[0], builtinVmDefinition().helpers);
  bool found = false;
  for (auto& d : diags) found |= d.message.find("misplaced") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validation rejects unknown intrinsics and bad arity") {
  ParsedDefinition p = parseHandlerListing(
      "(bytecode-handler bad (push (frobnicate 1)) (fetchNextBytecode))");
  auto diags = validateHandler(*p.handlers[0], builtinVmDefinition().helpers);
  bool found = false;
  for (auto& d : diags) found |= d.message.find("unresolved") != std::string::npos;
  CHECK(found);

  ParsedDefinition q = parseHandlerListing(
      "(bytecode-handler bad2 (push (add 1)) (fetchNextBytecode))");
  auto diags2 = validateHandler(*q.handlers[0], builtinVmDefinition().helpers);
  bool arity = false;
  for (auto& d : diags2) arity |= d.message.find("expects") != std::string::npos;
  CHECK(arity);
}

TEST_CASE("every helper is used and handlers record their helpers") {
  const VMDefinition& def = builtinVmDefinition();
  const HandlerDef* pushLit = def.bytecodeHandlerNamed("pushLiteralConstant");
  REQUIRE(pushLit != nullptr);
  REQUIRE(pushLit->helpersUsed.size() == 1);
  CHECK(pushLit->helpersUsed[0] == "literal");
}

TEST_CASE("special selector table matches the reserved selector ids") {
  const VMDefinition& def = builtinVmDefinition();
  CHECK(def.specialSelectors[0] == kSelectorAdd);
  CHECK(def.specialSelectors[4] == kSelectorLess);
  CHECK(def.table[0x60].specialSelectorIndex == 0);
  CHECK(def.table[0x64].specialSelectorIndex == 4);
}
