#pragma once

#include <optional>

#include "druidlet/druid_ir.hpp"
#include "druidlet/handler_lang.hpp"

namespace druidlet {

struct TranslationResult {
  std::optional<Ir> ir;  // absent when the handler is not compilable
  std::vector<Diagnostic> diagnostics;
  // Meta-compile-time guard: the primitive compiles only when installed on
  // this class (the receiver type check is dropped from the fast path).
  std::optional<uint32_t> installClassGuard;
};

// Meta-interprets a bytecode handler specialized to one opcode-table entry:
// helper calls are inlined, currentBytecode is bound to the opcode value,
// druidIgnore bodies vanish, interpreterIgnore bodies are translated, and
// deoptimization points replace forced-interpretation paths.
TranslationResult translateHandler(const VMDefinition& vmdef, const HandlerDef& def,
                                   uint8_t opcode);

// Meta-interprets a primitive handler against the register calling
// convention: stack accesses become receiver/argument parameters and the
// annotated receiver class folds the receiver checks away.
TranslationResult translatePrimitive(const VMDefinition& vmdef, const HandlerDef& def);

}  // namespace druidlet
