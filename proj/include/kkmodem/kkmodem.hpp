#pragma once

// Umbrella header for the modem library.

#include "kkmodem/common.hpp"
#include "kkmodem/fft.hpp"
#include "kkmodem/signal.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/raw_io.hpp"
#include "kkmodem/prbs.hpp"
#include "kkmodem/constellation.hpp"
#include "kkmodem/txdsp.hpp"
#include "kkmodem/channel.hpp"
#include "kkmodem/frontend.hpp"
#include "kkmodem/kk.hpp"
#include "kkmodem/static_eq.hpp"
#include "kkmodem/ddlms.hpp"
#include "kkmodem/pipeline.hpp"
#include "kkmodem/metrics.hpp"
#include "kkmodem/config.hpp"
#include "kkmodem/harness.hpp"
