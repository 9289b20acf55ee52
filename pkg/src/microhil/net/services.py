"""Networked simulator and controller endpoints.

The simulator service owns the plant: one tick thread advances it at the
loop rate, streams synchrophasor frames for all six PMUs over one TCP
port (per-frame idcode demultiplexes), and answers Modbus reads (SoC, PV)
and writes (inverter references) on another. The controller service
connects to both, closes the loop through its delay lines, and exposes
the operator bridge. Protocol sessions run on their own threads and talk
to the tick loops only through locked snapshots and queues.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque

from ..control import ControllerState, InverterCommand, Measurements, controller_tick
from ..plant import Microgrid
from ..wire import c37118, modbus
from .bridge import apply_command, telemetry_line
from .clock import LoopClock, MODE_REALTIME
from .delay import DelayLine
from .records import CONTROLLER_COLUMNS, PLANT_COLUMNS, RecordWriter

log = logging.getLogger(__name__)

FAILSAFE_STALE_TICKS = 50
PMU_QUEUE_FRAMES = 600
RECONNECT_DELAY_S = 0.5


def recv_exact(sock: socket.socket, n: int) -> bytes:
    """Read exactly n bytes or raise ConnectionError on EOF."""
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf


def _serve_socket(host: str, port: int) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(8)
    srv.settimeout(0.2)
    return srv


class SimulatorService:
    """Plant host: tick loop, synchrophasor stream, Modbus register map."""

    def __init__(self, grid: Microgrid, host: str = "127.0.0.1",
                 pmu_port: int = 4712, modbus_port: int = 1502,
                 record_path: str | None = None,
                 n_ticks: int | None = None,
                 clock_mode: str = MODE_REALTIME):
        self.grid = grid
        self.host = host
        self.clock = LoopClock(grid.ts, clock_mode)
        self.n_ticks = n_ticks
        self.record_path = record_path
        self.finished = threading.Event()
        self._stop = threading.Event()
        self._cmd_lock = threading.Lock()
        self._cmd = (0.0, 0.0)
        self._reg_lock = threading.Lock()
        self._registers = [0] * modbus.REGISTER_COUNT
        self._pmu_clients: list[tuple[socket.socket, deque, threading.Event]] = []
        self._clients_lock = threading.Lock()
        self._pmu_srv = _serve_socket(host, pmu_port)
        self._modbus_srv = _serve_socket(host, modbus_port)
        self.pmu_port = self._pmu_srv.getsockname()[1]
        self.modbus_port = self._modbus_srv.getsockname()[1]
        self._threads: list[threading.Thread] = []
        self.overrun_flag = False

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        for target, name in ((self._tick_loop, "sim-tick"),
                             (self._accept_pmu, "sim-pmu-accept"),
                             (self._accept_modbus, "sim-modbus-accept")):
            th = threading.Thread(target=target, name=name, daemon=True)
            th.start()
            self._threads.append(th)

    def stop(self) -> None:
        self._stop.set()
        for srv in (self._pmu_srv, self._modbus_srv):
            try:
                srv.close()
            except OSError:
                pass
        with self._clients_lock:
            for sock, _, _ in self._pmu_clients:
                try:
                    sock.close()
                except OSError:
                    pass
        for th in self._threads:
            th.join(timeout=2.0)

    def join(self, timeout: float | None = None) -> bool:
        return self.finished.wait(timeout)

    # -- tick loop -----------------------------------------------------

    def _tick_loop(self) -> None:
        writer = RecordWriter(self.record_path, PLANT_COLUMNS) \
            if self.record_path else None
        self.clock.start()
        try:
            while not self._stop.is_set():
                k = self.clock.wait_tick()
                if self.n_ticks is not None and k >= self.n_ticks:
                    break
                with self._cmd_lock:
                    cmd_p, cmd_q = self._cmd
                state = self.grid.advance(cmd_p, cmd_q)
                t = k * self.grid.ts

                faults = (modbus.FAULT_PLANT if state.fault else 0) | \
                         (modbus.FAULT_BATTERY_SAT if state.battery.saturated else 0) | \
                         (modbus.FAULT_TICK_OVERRUN if self.overrun_flag else 0)
                with self._reg_lock:
                    self._registers[modbus.REG_SOC] = modbus.soc_to_reg(state.battery.soc)
                    self._registers[modbus.REG_PV] = modbus.pv_to_reg(state.p_pv)
                    self._registers[modbus.REG_HEARTBEAT] = k & 0xFFFF
                    self._registers[modbus.REG_FAULTS] = faults
                self.overrun_flag = self.clock.overruns > 0

                frames = [c37118.encode_data_frame(self.grid.pmu_sample(i), i, t)
                          for i in (1, 2, 3, 4, 5, 6)]
                payload = b"".join(frames)
                with self._clients_lock:
                    clients = list(self._pmu_clients)
                for _, queue, started in clients:
                    if started.is_set():
                        queue.append(payload)

                if writer:
                    writer.write({
                        "tick": k, "t": t,
                        "p_dem": state.p_dem, "q_dem": state.q_dem,
                        "p_pv": state.p_pv,
                        "p_pcc": state.p_pcc, "q_pcc": state.q_pcc,
                        "soc": state.battery.soc,
                        "p_inv_applied": state.p_inv_applied,
                        "q_inv_applied": state.q_inv_applied,
                        "fault": state.fault,
                    })
        finally:
            if writer:
                writer.close()
            self.finished.set()

    # -- synchrophasor sessions -----------------------------------------

    def _accept_pmu(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._pmu_srv.accept()
            except (socket.timeout, OSError):
                continue
            queue: deque = deque(maxlen=PMU_QUEUE_FRAMES)
            started = threading.Event()
            with self._clients_lock:
                self._pmu_clients.append((sock, queue, started))
            threading.Thread(target=self._pmu_session, name="sim-pmu-client",
                             args=(sock, queue, started), daemon=True).start()

    def _pmu_session(self, sock: socket.socket, queue: deque,
                     started: threading.Event) -> None:
        writer = threading.Thread(target=self._pmu_writer, name="sim-pmu-write",
                                  args=(sock, queue), daemon=True)
        writer.start()
        sock.settimeout(0.5)
        try:
            while not self._stop.is_set():
                try:
                    head = recv_exact(sock, 4)
                    size = int.from_bytes(head[2:4], "big")
                    rest = recv_exact(sock, max(0, size - 4))
                    command, _ = c37118.decode_command_frame(head + rest)
                    if command == c37118.CMD_START:
                        started.set()
                    elif command == c37118.CMD_STOP:
                        started.clear()
                except socket.timeout:
                    continue
                except (c37118.FramingError, c37118.ChecksumError):
                    log.warning("dropping malformed command frame")
        except (ConnectionError, OSError):
            pass
        finally:
            with self._clients_lock:
                self._pmu_clients = [c for c in self._pmu_clients if c[0] is not sock]
            try:
                sock.close()
            except OSError:
                pass

    def _pmu_writer(self, sock: socket.socket, queue: deque) -> None:
        try:
            while not self._stop.is_set():
                if queue:
                    sock.sendall(queue.popleft())
                else:
                    time.sleep(0.005)
        except (ConnectionError, OSError):
            pass

    # -- modbus sessions -------------------------------------------------

    def _accept_modbus(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._modbus_srv.accept()
            except (socket.timeout, OSError):
                continue
            threading.Thread(target=self._modbus_session, name="sim-modbus-client",
                             args=(sock,), daemon=True).start()

    def _modbus_session(self, sock: socket.socket) -> None:
        sock.settimeout(1.0)
        try:
            while not self._stop.is_set():
                try:
                    header = recv_exact(sock, 7)
                except socket.timeout:
                    continue
                length = int.from_bytes(header[4:6], "big")
                body = recv_exact(sock, max(0, length - 1))
                try:
                    request = modbus.parse_request(header + body)
                except modbus.ModbusError as exc:
                    log.warning("bad modbus request: %s", exc)
                    continue
                with self._reg_lock:
                    response, writes = modbus.serve_request(
                        request, self._registers,
                        ref_limit_kw=self.grid.inverter.p_max)
                    for addr, raw in writes.items():
                        self._registers[addr] = raw
                if writes:
                    with self._cmd_lock, self._reg_lock:
                        self._cmd = (
                            modbus.reg_to_ref(self._registers[modbus.REG_P_REF]),
                            modbus.reg_to_ref(self._registers[modbus.REG_Q_REF]))
                sock.sendall(response)
        except (ConnectionError, OSError):
            pass
        finally:
            try:
                sock.close()
            except OSError:
                pass


class ModbusClient:
    """Blocking Modbus TCP client used by the controller service."""

    def __init__(self, host: str, port: int, unit: int = 1, timeout: float = 0.5):
        self.host, self.port, self.unit = host, port, unit
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._txn = 0

    def connect(self) -> None:
        self._sock = socket.create_connection((self.host, self.port),
                                              timeout=self.timeout)

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    @property
    def connected(self) -> bool:
        return self._sock is not None

    def _roundtrip(self, request: bytes) -> tuple[int, ...]:
        if self._sock is None:
            raise ConnectionError("not connected")
        try:
            self._sock.sendall(request)
            header = recv_exact(self._sock, 7)
            length = int.from_bytes(header[4:6], "big")
            body = recv_exact(self._sock, max(0, length - 1))
        except (OSError, ConnectionError):
            self.close()
            raise ConnectionError("modbus roundtrip failed")
        return modbus.parse_response(header + body)

    def read(self, address: int, count: int) -> tuple[int, ...]:
        self._txn = (self._txn + 1) & 0xFFFF
        return self._roundtrip(
            modbus.build_read_request(self._txn, self.unit, address, count))

    def write(self, address: int, values: tuple[int, ...]) -> None:
        self._txn = (self._txn + 1) & 0xFFFF
        self._roundtrip(
            modbus.build_write_request(self._txn, self.unit, address, values))


class ControllerService:
    """Controller host: PMU subscriber, Modbus poller/writer, tick loop
    with delay lines, and the operator bridge."""

    def __init__(self, state: ControllerState, sim_host: str,
                 pmu_port: int, modbus_port: int,
                 host: str = "127.0.0.1", bridge_port: int = 0,
                 delay_in: int = 1, delay_out: int = 1,
                 record_path: str | None = None,
                 n_ticks: int | None = None,
                 clock_mode: str = MODE_REALTIME):
        self.state = state
        self.sim_host = sim_host
        self.sim_pmu_port = pmu_port
        self.sim_modbus_port = modbus_port
        self.clock = LoopClock(state.gains_p.ts, clock_mode)
        self.n_ticks = n_ticks
        self.record_path = record_path
        self.ingress = DelayLine(delay_in)
        self.egress = DelayLine(max(0, delay_out - 1))
        self.finished = threading.Event()
        self._stop = threading.Event()
        self._pmu_lock = threading.Lock()
        self._pmu1: tuple[float, float] | None = None
        self._pmu1_at = 0.0
        self._modbus = ModbusClient(sim_host, modbus_port)
        self._bridge_srv = _serve_socket(host, bridge_port)
        self.bridge_port = self._bridge_srv.getsockname()[1]
        self._bridge_clients: list[tuple[socket.socket, deque]] = []
        self._bridge_lock = threading.Lock()
        self._cmd_queue: deque = deque()
        self._threads: list[threading.Thread] = []
        self.telemetry: deque = deque(maxlen=100_000)

    def start(self) -> None:
        for target, name in ((self._tick_loop, "ctl-tick"),
                             (self._pmu_reader, "ctl-pmu"),
                             (self._accept_bridge, "ctl-bridge-accept")):
            th = threading.Thread(target=target, name=name, daemon=True)
            th.start()
            self._threads.append(th)

    def stop(self) -> None:
        self._stop.set()
        try:
            self._bridge_srv.close()
        except OSError:
            pass
        with self._bridge_lock:
            for sock, _ in self._bridge_clients:
                try:
                    sock.close()
                except OSError:
                    pass
        self._modbus.close()
        for th in self._threads:
            th.join(timeout=2.0)

    def join(self, timeout: float | None = None) -> bool:
        return self.finished.wait(timeout)

    # -- measurement ingestion -------------------------------------------

    def _pmu_reader(self) -> None:
        while not self._stop.is_set():
            sock = None
            try:
                sock = socket.create_connection(
                    (self.sim_host, self.sim_pmu_port), timeout=1.0)
                sock.sendall(c37118.encode_command_frame(c37118.CMD_START, 1))
                sock.settimeout(1.0)
                while not self._stop.is_set():
                    try:
                        head = recv_exact(sock, 4)
                    except socket.timeout:
                        continue
                    size = int.from_bytes(head[2:4], "big")
                    frame = head + recv_exact(sock, max(0, size - 4))
                    try:
                        sample, idcode, _ = c37118.decode_data_frame(frame)
                    except (c37118.FramingError, c37118.ChecksumError):
                        log.warning("dropping bad data frame")
                        continue
                    if idcode == 1:
                        with self._pmu_lock:
                            self._pmu1 = (sample.p_kw, sample.q_kvar)
                            self._pmu1_at = time.monotonic()
            except (ConnectionError, OSError):
                pass
            finally:
                if sock is not None:
                    try:
                        sock.close()
                    except OSError:
                        pass
            if not self._stop.is_set():
                time.sleep(RECONNECT_DELAY_S)

    def _snapshot(self) -> Measurements | None:
        with self._pmu_lock:
            pmu1 = self._pmu1
            age = time.monotonic() - self._pmu1_at
        if pmu1 is None or age > 1.0:
            return None
        if not self._modbus.connected:
            try:
                self._modbus.connect()
            except OSError:
                return None
        try:
            soc_raw, pv_raw = self._modbus.read(modbus.REG_SOC, 2)
        except (ConnectionError, modbus.ModbusError, modbus.ModbusException):
            return None
        return Measurements(p_pcc=pmu1[0], q_pcc=pmu1[1],
                            soc=modbus.reg_to_soc(soc_raw),
                            p_pv=modbus.reg_to_pv(pv_raw))

    # -- tick loop ---------------------------------------------------------

    def _tick_loop(self) -> None:
        writer = RecordWriter(self.record_path, CONTROLLER_COLUMNS) \
            if self.record_path else None
        self.clock.start()
        try:
            while not self._stop.is_set():
                k = self.clock.wait_tick()
                if self.n_ticks is not None and k >= self.n_ticks:
                    break
                while self._cmd_queue:
                    line, sock = self._cmd_queue.popleft()
                    reply = apply_command(self.state, line)
                    try:
                        sock.sendall(reply.encode() + b"\n")
                    except OSError:
                        pass

                meas = self._snapshot()
                delayed = self.ingress.step(meas) if meas is not None else None
                cmd, self.state = controller_tick(delayed, self.state)
                if self.state.staleness >= FAILSAFE_STALE_TICKS:
                    cmd = InverterCommand(0.0, 0.0)
                out = self.egress.step(cmd)
                if out is not None:
                    try:
                        if not self._modbus.connected:
                            self._modbus.connect()
                        self._modbus.write(modbus.REG_P_REF,
                                           (modbus.ref_to_reg(out.p_kw),
                                            modbus.ref_to_reg(out.q_kvar)))
                    except (OSError, ConnectionError, modbus.ModbusException):
                        pass

                t = k * self.clock.ts
                line = telemetry_line(t, self.state, delayed, cmd)
                self.telemetry.append(line)
                data = line.encode() + b"\n"
                with self._bridge_lock:
                    clients = list(self._bridge_clients)
                for _, queue in clients:
                    queue.append(data)

                if writer:
                    dbg = self.state.debug
                    m = delayed or self.state.last_meas
                    writer.write({
                        "tick": k, "t": t, "mode": self.state.ref.mode,
                        "recovery": self.state.recovery_active,
                        "stale": dbg.stale,
                        "p_pcc": m.p_pcc if m else 0.0,
                        "q_pcc": m.q_pcc if m else 0.0,
                        "soc": m.soc if m else 0.0,
                        "p_pv": m.p_pv if m else 0.0,
                        "cmd_p": cmd.p_kw, "cmd_q": cmd.q_kvar,
                        "p_ref": dbg.p_ref, "q_ref": dbg.q_ref,
                        "p_soc_bar": dbg.p_soc_bar,
                        "p_dem_hat": dbg.p_dem_hat, "q_dem_hat": dbg.q_dem_hat,
                        "p_dem_bar": dbg.p_dem_bar, "q_dem_bar": dbg.q_dem_bar,
                        "err_p": dbg.err_p, "err_q": dbg.err_q,
                        "sat_p": dbg.saturated_p, "sat_q": dbg.saturated_q,
                    })
        finally:
            if writer:
                writer.close()
            self.finished.set()

    # -- operator bridge ----------------------------------------------------

    def _accept_bridge(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _ = self._bridge_srv.accept()
            except (socket.timeout, OSError):
                continue
            queue: deque = deque(maxlen=2048)
            with self._bridge_lock:
                self._bridge_clients.append((sock, queue))
            threading.Thread(target=self._bridge_reader, name="ctl-bridge-read",
                             args=(sock,), daemon=True).start()
            threading.Thread(target=self._bridge_writer, name="ctl-bridge-write",
                             args=(sock, queue), daemon=True).start()

    def _bridge_reader(self, sock: socket.socket) -> None:
        sock.settimeout(0.5)
        buf = b""
        try:
            while not self._stop.is_set():
                try:
                    chunk = sock.recv(4096)
                except socket.timeout:
                    continue
                if not chunk:
                    break
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        self._cmd_queue.append((line.decode(errors="replace"), sock))
        except OSError:
            pass
        finally:
            self._drop_bridge_client(sock)

    def _bridge_writer(self, sock: socket.socket, queue: deque) -> None:
        try:
            while not self._stop.is_set():
                if queue:
                    try:
                        sock.sendall(queue.popleft())
                    except OSError:
                        break
                else:
                    time.sleep(0.005)
        finally:
            self._drop_bridge_client(sock)

    def _drop_bridge_client(self, sock: socket.socket) -> None:
        with self._bridge_lock:
            self._bridge_clients = [c for c in self._bridge_clients
                                    if c[0] is not sock]
        try:
            sock.close()
        except OSError:
            pass
