// Grid-run preview: mirrors the server's template semantics (inclusive
// start..stop range, lexicographic cartesian product, first free occurrence
// of each placeholder substituted) so the previewed matrix is exactly what
// POST /gridrun will execute.

export const HTTP_GRID_CAP = 32;

export interface GridBinding {
  placeholder: string;
  values: (number | string)[];
}

export function domainValues(start: number, stop: number, step: number): number[] {
  if (!(step > 0) || start > stop) {
    throw new Error(`bad domain: start=${start} stop=${stop} step=${step}`);
  }
  const values: number[] = [];
  for (let v = start; v <= stop + 1e-9; v += step) {
    values.push(Number(v.toFixed(10)));
  }
  return values;
}

function formatParam(value: number | string): string {
  if (typeof value === 'number' && Number.isInteger(value)) return String(value);
  return String(value);
}

function substituteOnce(command: string, placeholder: string, value: number | string): string {
  const at = command.indexOf(placeholder);
  if (at < 0) {
    throw new Error(`no substitution site for ${JSON.stringify(placeholder)}`);
  }
  return command.slice(0, at) + formatParam(value) + command.slice(at + placeholder.length);
}

/** All command lines a grid launch will run, in execution order. */
export function previewCommands(
  command: string,
  bindings: GridBinding[],
  cap = HTTP_GRID_CAP,
): string[] {
  let combos: (number | string)[][] = [[]];
  for (const binding of bindings) {
    if (binding.values.length === 0) {
      throw new Error(`parameter ${binding.placeholder} has an empty domain`);
    }
    const next: (number | string)[][] = [];
    for (const combo of combos) {
      for (const value of binding.values) {
        next.push([...combo, value]);
      }
    }
    combos = next;
  }
  if (combos.length > cap) {
    throw new Error(`grid of ${combos.length} combinations exceeds cap ${cap}`);
  }
  return combos.map((combo) => {
    let cmd = command;
    bindings.forEach((binding, i) => {
      cmd = substituteOnce(cmd, binding.placeholder, combo[i]);
    });
    return cmd;
  });
}
