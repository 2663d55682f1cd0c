#pragma once

#include "xb/alignment.hpp"
#include "xb/complexity.hpp"
#include "xb/error.hpp"
#include "xb/evaluator.hpp"
#include "xb/failure.hpp"
#include "xb/harness.hpp"
#include "xb/judge.hpp"
#include "xb/metrics.hpp"
#include "xb/mock_judge.hpp"
#include "xb/reporting.hpp"
#include "xb/schema.hpp"
#include "xb/tokenizer.hpp"
#include "xb/value_semantics.hpp"
