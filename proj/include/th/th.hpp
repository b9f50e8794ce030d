#pragma once

#include "th/archive.hpp"
#include "th/bits.hpp"
#include "th/bounded_queue.hpp"
#include "th/config.hpp"
#include "th/detector.hpp"
#include "th/errors.hpp"
#include "th/lookahead_table.hpp"
#include "th/message_id.hpp"
#include "th/pair_oracle.hpp"
#include "th/profile.hpp"
#include "th/profile_store.hpp"
#include "th/report.hpp"
#include "th/sequence_window.hpp"
#include "th/sim/handoff.hpp"
#include "th/sim/scenario.hpp"
#include "th/sim/world.hpp"
#include "th/status.hpp"
#include "th/symbol_registry.hpp"
#include "th/trace_event.hpp"
#include "th/trace_io.hpp"
