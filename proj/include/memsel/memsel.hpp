#pragma once

#include "memsel/error.hpp"
#include "memsel/eval.hpp"
#include "memsel/io.hpp"
#include "memsel/parallel.hpp"
#include "memsel/report.hpp"
#include "memsel/retrieval.hpp"
#include "memsel/scoring.hpp"
#include "memsel/store.hpp"
#include "memsel/synth.hpp"
#include "memsel/textmetrics.hpp"
#include "memsel/vec.hpp"
