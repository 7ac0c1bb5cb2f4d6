// Usage: node check_rules.js app.js vectors.json
// Evaluates every rule case with the generated evaluators and compares the
// selected branch with the expected one.
"use strict";
const fs = require("fs");
const app = require(process.argv[2]);
const vectors = JSON.parse(fs.readFileSync(process.argv[3], "utf8"));
let failures = 0;
let cases = 0;
for (const rule of vectors.rules) {
  const fns = app.screens[rule.screen].rules[rule.rule];
  if (!fns || fns.length !== rule.conditions.length) {
    console.log(`missing evaluators for ${rule.rule}`);
    failures++;
    continue;
  }
  for (const c of rule.cases) {
    cases++;
    let got = null;
    for (let i = 0; i < fns.length; i++) {
      if (fns[i](c.context)) {
        got = i;
        break;
      }
    }
    if (got === null && rule.has_else) got = fns.length;
    if (got !== c.expected) {
      failures++;
      if (failures < 10) console.log(`${rule.rule}: expected ${c.expected} got ${got} for ${JSON.stringify(c.context)}`);
    }
  }
}
console.log(`${cases} cases, ${failures} failures`);
process.exit(failures ? 1 : 0);
