/**
 * Operator-bridge line protocol, shared by the relay server and the
 * browser client.
 *
 * The controller streams one JSON telemetry object per tick,
 * newline-delimited, and answers each command line with "ok ..." or
 * "err ...". The console performs no control computation: everything it
 * shows comes straight out of these records.
 */
export const P_MAX_KW = 250;
export const Q_MAX_KVAR = 250;
export const TICK_SECONDS = 0.1;
export const MODES = ["off", "adaptive", "manual"];
const NUMERIC_FIELDS = [
    "tick", "t", "p_pcc", "q_pcc", "soc", "p_pv", "p_ref", "q_ref",
    "p_soc_bar", "p_dem_bar", "q_dem_bar", "err_p", "err_q", "cmd_p", "cmd_q",
];
/** Parse one stream line; returns null for replies and anything else
 * that is not a well-formed telemetry record. */
export function parseTelemetryLine(line) {
    const trimmed = line.trim();
    if (!trimmed.startsWith("{"))
        return null;
    let obj;
    try {
        obj = JSON.parse(trimmed);
    }
    catch {
        return null;
    }
    for (const field of NUMERIC_FIELDS) {
        if (typeof obj[field] !== "number" || !Number.isFinite(obj[field])) {
            return null;
        }
    }
    if (!MODES.includes(obj.mode))
        return null;
    for (const flag of ["recovery", "stale", "sat_p", "sat_q"]) {
        if (typeof obj[flag] !== "boolean")
            return null;
    }
    return obj;
}
/** Command replies are plain lines starting with ok/err. */
export function isCommandReply(line) {
    return line.startsWith("ok ") || line.startsWith("err ") ||
        line === "ok" || line === "err";
}
/** Client-side gate for manual references; returns an error message or
 * null when the pair is sendable. */
export function validateReference(p, q) {
    if (!Number.isFinite(p) || !Number.isFinite(q)) {
        return "reference values must be numbers";
    }
    if (Math.abs(p) > P_MAX_KW) {
        return `|P| must be <= ${P_MAX_KW} kW`;
    }
    if (Math.abs(q) > Q_MAX_KVAR) {
        return `|Q| must be <= ${Q_MAX_KVAR} kvar`;
    }
    return null;
}
export function buildModeCommand(mode) {
    return `mode ${mode}`;
}
export function buildRefCommand(p, q) {
    return `ref ${p} ${q}`;
}
export function buildGainsCommand(loop, kp, ki, kd) {
    return `gains ${loop} ${kp} ${ki} ${kd}`;
}
/** Turn a console command request into a bridge line, validating it.
 * Returns {line} or {error}. */
export function commandToLine(req) {
    if (req.type === "mode") {
        if (!req.mode || !MODES.includes(req.mode)) {
            return { error: "unknown mode" };
        }
        return { line: buildModeCommand(req.mode) };
    }
    if (req.type === "ref") {
        const p = Number(req.p), q = Number(req.q);
        const bad = validateReference(p, q);
        if (bad)
            return { error: bad };
        return { line: buildRefCommand(p, q) };
    }
    if (req.type === "gains") {
        if (req.loop !== "p" && req.loop !== "q") {
            return { error: "loop must be p or q" };
        }
        const kp = Number(req.k_p), ki = Number(req.k_i), kd = Number(req.k_d);
        if (![kp, ki, kd].every(Number.isFinite)) {
            return { error: "gains must be numbers" };
        }
        if (ki < 0)
            return { error: "k_i must be >= 0" };
        return { line: buildGainsCommand(req.loop, kp, ki, kd) };
    }
    return { error: "unknown command type" };
}
