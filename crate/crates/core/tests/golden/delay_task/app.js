// generated by muit for module DelayTask
(function (root) {
  "use strict";
  var app = { module: "DelayTask", entry: "delayTask", vars: {"delaytime":0,"reason":"We delay... ","taskList":[],"taskname":"Michael's US Travel Reimbursement"}, entities: {"Role":{"role":"initiator","task":null},"Task":{"createDate":"2014-07-21","dueDate":"2014-07-22","reason":null,"role":null,"status":"waiting for approval","tags":["reimbursement","travel","hotel","taxi"],"task_name":"Employee Travel Fee Approval","task_review":null}}, ops: {}, screens: {} };
  app.ops.import = function ($, v_WSDLUrl, v_user, v_pwd) {
    $.vars.taskList = $.api.httpRequest(((((v_WSDLUrl + "?user=") + v_user) + "&pwd=") + v_pwd));
  };
  app.ops.getTaskInfo = function ($) {
    for (const v_t of $.api.iter($.vars.taskList)) {
      $.api.add($.api.entity("Task").fromTaskList(v_t));
    }
  };
  app.ops.approveTask = function ($, v_t) {
    v_t.status = "approved";
  };
  app.ops.delayTask = function ($, v_t, v_days, v_reason) {
    v_t.status = "delay";
    v_t.dueDate = $.api.DateTime.create($.api.dt.getYear(v_t?.dueDate), $.api.dt.getMonth(v_t?.dueDate), ($.api.dt.getDate(v_t?.dueDate) + v_days));
    v_t.reason = v_reason;
  };
  app.ops.searchTask = function ($, v_taskList, v_s) {
    if ($.api.contains(v_taskList, v_s)) {
      return v_s;
    }
    return false;
  };
  app.screens["delayTask"] = {
    params: [],
    init: function ($) { },
    rules: {
    },
    views: {
      "delayTask__2-0:attr:value": function ($, locals) { return $.vars.reason; },
    },
    handlers: {
      "delayTask__1:change": function ($, locals) { $.vars.delaytime = $.api.select($.option?.value); },
      "delayTask__2-0:input": function ($, locals) { const v_$event = locals.$event; $.vars.reason = v_$event?.value; },
      "delayTask__3-0:click": function ($, locals) { $.ops.delayTask($, $.vars.taskname, $.vars.delaytime, $.vars.reason); },
    },
  };
  if (typeof module !== "undefined" && module.exports) module.exports = app;
  else root.muitApp = app;
})(typeof globalThis !== "undefined" ? globalThis : this);
