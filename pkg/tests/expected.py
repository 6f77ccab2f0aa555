"""Hand-derived stage outcomes for fixtures/corpus under fixtures/stub.toml."""

FILTER_REJECTED = {
    "alu/alu_tb.v": "testbench marker tb",
    "alu/sim/wave_dump.v": "path keyword sim",
    "arith/add16_gate.v": "suffix _gate.v",
    "arith/add16_synth.v": "suffix _synth.v",
    "arith/netlist/add16_netlist.v": "suffix _netlist.v",
    "loose.v": "outside any project directory",
    "mem/dump.v": "content dumpfile",
    "mem/mem_test/fifo_check.v": "path keyword _test",
}
DEDUP_REJECTED = {"alu/rtl/vendor/copy/adder8.v": "duplicate of alu/rtl/adder8.v"}
SYNTAX_REJECTED = {"broken/bad_syntax.v"}
SYNTH_REJECTED = {
    "broken/elab_only.v",
    "broken/good_inv.v",
    "counter/v1/counter.v",
    "delayed/delay_line.v",
    "delayed/delay_top.v",
}
SYNTH_KEPT = [
    "alu/rtl/adder8.v",
    "alu/rtl/alu_top.v",
    "arith/add16.v",
    "arith/arith_top.v",
    "arith/bus_macro.v",
    "arith/gates.v",
    "arith/mux_param.v",
    "counter/top.v",
    "counter/v2/counter.v",
    "dec/dec.v",
    "mem/fifo.v",
    "mem/filler_cell.v",
    "mem/ram.v",
    "mem/spare.v",
    "uart/uart_tx.v",
]
DB_REJECTED = {"db::bus_buf": "unresolved width: din, dout", "db::spare_logic": "no ports captured"}
STORED_MODULES = [
    "adder8",
    "alu_top",
    "ADD",
    "arith_top",
    "and2",
    "or2",
    "mux2",
    "counter_top",
    "counter",
    "dec",
    "fifo",
    "filler_cell",
    "ram",
    "uart_tx",
]
